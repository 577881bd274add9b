#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "egossl/runner.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::string out;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool deterministic = true;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config, "JSON config file")->required();
    cmd->add_option("--out", args.out, "output directory")->required();
    cmd->add_option("--set", args.sets,
                    "override one config value as dotted.path=value (repeatable)");
    cmd->add_option("--seed", args.seed, "override the config seed");
    cmd->add_option("--deterministic", args.deterministic,
                    "record the determinism intent (true/false)");
}

egossl::config::Config build_config(const CLI::App& cmd, const CommonArgs& args) {
    auto doc = egossl::config::load_config_file(args.config);
    for (const auto& s : args.sets) egossl::config::apply_override(doc, s);
    auto cfg = egossl::config::config_from_json(doc);
    if (cmd.count("--seed") > 0) cfg.seed = args.seed;
    if (cmd.count("--deterministic") > 0) cfg.deterministic = args.deterministic;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"paired video / head-motion representation learning"};
    app.require_subcommand(1);

    CommonArgs a_gen, a_pre, a_sup, a_probe, a_eval;
    std::string data_pre, data_sup, data_probe, data_eval;
    std::string ckpt_probe, ckpt_eval;
    std::string mod_sup = "ensemble", mod_probe = "ensemble";
    std::vector<std::string> freeze_pre, freeze_sup;
    const auto modality_check = CLI::IsMember({"video", "motion", "ensemble"});

    auto* gen = app.add_subcommand("gen", "write a synthetic paired dataset");
    add_common(gen, a_gen);

    auto* pre = app.add_subcommand("pretrain", "contrastive pretraining of both encoders");
    add_common(pre, a_pre);
    pre->add_option("--data", data_pre, "dataset directory")->required();
    pre->add_option("--freeze", freeze_pre, "freeze a parameter group prefix (repeatable)");

    auto* sup = app.add_subcommand("supervised", "label-supervised encoder training");
    add_common(sup, a_sup);
    sup->add_option("--data", data_sup, "dataset directory")->required();
    sup->add_option("--modality", mod_sup, "video, motion, or ensemble")->check(modality_check);
    sup->add_option("--freeze", freeze_sup, "freeze a parameter group prefix (repeatable)");

    auto* probe = app.add_subcommand("probe", "linear probes on frozen embeddings");
    add_common(probe, a_probe);
    probe->add_option("--data", data_probe, "dataset directory")->required();
    probe->add_option("--checkpoint", ckpt_probe, "encoder checkpoint")->required();
    probe->add_option("--modality", mod_probe, "video, motion, or ensemble")
        ->check(modality_check);

    auto* eval = app.add_subcommand("eval", "held-out correspondence ROC-AUC of a checkpoint");
    add_common(eval, a_eval);
    eval->add_option("--data", data_eval, "dataset directory")->required();
    eval->add_option("--checkpoint", ckpt_eval, "encoder checkpoint")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) {
            egossl::runner::run_gen(build_config(*gen, a_gen), a_gen.out);
        } else if (pre->parsed()) {
            egossl::runner::run_pretrain(build_config(*pre, a_pre), data_pre, a_pre.out,
                                         freeze_pre);
        } else if (sup->parsed()) {
            egossl::runner::run_supervised(build_config(*sup, a_sup), data_sup, a_sup.out,
                                           mod_sup, freeze_sup);
        } else if (probe->parsed()) {
            egossl::runner::run_probe(build_config(*probe, a_probe), data_probe, ckpt_probe,
                                      a_probe.out, mod_probe);
        } else if (eval->parsed()) {
            egossl::runner::run_eval(build_config(*eval, a_eval), data_eval, ckpt_eval,
                                     a_eval.out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
