#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "egossl/config.hpp"

namespace egossl::runner {

using config::Config;

// Each command writes its artifacts under `out_dir` and throws on failure,
// leaving nothing half-written except what the contract spells out (a
// training overflow keeps the most recent epoch-boundary checkpoint).

// Writes manifest.json, video.bin, motion.bin.
void run_gen(const Config& cfg, const std::filesystem::path& out_dir);

// Contrastive pretraining over the training subjects. Writes checkpoint.bin
// (refreshed at every epoch boundary) and metrics.json with the loss curve
// and the held-out correspondence ROC-AUC.
void run_pretrain(const Config& cfg, const std::filesystem::path& data_dir,
                  const std::filesystem::path& out_dir,
                  const std::vector<std::string>& freeze_prefixes);

// Label-supervised training of one or both encoders with softmax heads.
// Writes checkpoint.bin and metrics.json with test accuracies.
void run_supervised(const Config& cfg, const std::filesystem::path& data_dir,
                    const std::filesystem::path& out_dir, const std::string& modality,
                    const std::vector<std::string>& freeze_prefixes);

// Linear probes on frozen embeddings from a checkpoint. Writes probe.bin
// and metrics.json (accuracy, per-class accuracy, and for the ensemble the
// per-class modality attribution counts).
void run_probe(const Config& cfg, const std::filesystem::path& data_dir,
               const std::filesystem::path& checkpoint_path,
               const std::filesystem::path& out_dir, const std::string& modality);

// Correspondence ROC-AUC of a checkpoint on the held-out subjects. Writes
// metrics.json.
void run_eval(const Config& cfg, const std::filesystem::path& data_dir,
              const std::filesystem::path& checkpoint_path,
              const std::filesystem::path& out_dir);

}  // namespace egossl::runner
