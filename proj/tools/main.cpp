// Command-line surface: synthetic data generation, training, evaluation,
// single-example prediction, and topology inspection.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gqa/harness.hpp"
#include "gqa/topology.hpp"

namespace {

using namespace gqa;

Vocabulary make_vocab(const std::string& embeddings_path, const std::vector<Example>& corpus,
                      int dim, uint64_t seed) {
    if (!embeddings_path.empty()) return load_pretrained_embeddings(embeddings_path, dim);
    // no pretrained file: deterministic random table over the corpus tokens
    return random_embeddings(corpus_tokens(corpus), dim, seed);
}

// Flags mirroring TrainConfig; every flag records whether it was set so that
// command-line values override the config file.
struct ConfigFlags {
    std::vector<std::pair<std::string, std::string>> overrides;

    void attach(CLI::App* cmd) {
        auto opt = [this, cmd](const std::string& flag, const std::string& key,
                               const std::string& help) {
            cmd->add_option_function<std::string>(
                   flag, [this, key](const std::string& v) { overrides.emplace_back(key, v); },
                   help)
                ->expected(1);
        };
        opt("--seed", "seed", "RNG seed");
        opt("--lambda-train", "lambda_train", "similarity mixing weight during training");
        opt("--lambda-test", "lambda_test", "similarity mixing weight during evaluation");
        opt("--emb-dim", "emb_dim", "word embedding dimension");
        opt("--steps", "steps", "graph propagation steps");
        opt("--char-emb-dim", "char_emb_dim", "character embedding dimension");
        opt("--char-cnn-dim", "char_cnn_dim", "character CNN output dimension");
        opt("--enc-hidden", "enc_hidden", "word/question BiLSTM hidden size");
        opt("--attn-dim", "attn_dim", "post-attention projection width");
        opt("--sent-hidden", "sent_hidden", "sentence-embedding BiLSTM hidden size");
        opt("--ggnn-hidden", "ggnn_hidden", "graph hidden size");
        opt("--word-hidden", "word_hidden", "graph-initialized BiLSTM hidden size");
        opt("--span-hidden", "span_hidden", "span-decoder BiLSTM hidden size");
        opt("--type-pool-dim", "type_pool_dim", "type-head pooling width");
        opt("--learning-rate", "learning_rate", "SGD step size");
        opt("--clip-norm", "clip_norm", "gradient clipping threshold (0 disables)");
        opt("--batch-size", "batch_size", "examples per gradient step");
        opt("--epochs", "epochs", "training epochs");
        opt("--adam", "adam", "true/false: Adam-style moments instead of plain SGD");
        opt("--sp-weight", "sp_weight", "supporting-fact loss weight");
        opt("--type-weight", "type_weight", "answer-type loss weight");
        opt("--sp-threshold", "sp_threshold", "supporting-fact sigmoid threshold");
        opt("--train", "train_path", "training corpus (JSON)");
        opt("--dev", "dev_path", "dev corpus (JSON)");
        opt("--data", "eval_path", "evaluation corpus (JSON)");
        opt("--embeddings", "embeddings_path", "pretrained embedding table");
        opt("--checkpoint", "checkpoint_path", "checkpoint file");
    }

    TrainConfig resolve(const std::string& config_path) const {
        TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_config(config_path);
        for (const auto& [key, value] : overrides) set_config_key(cfg, key, value);
        return cfg;
    }
};

nlohmann::ordered_json prediction_to_json(const Prediction& pred) {
    nlohmann::ordered_json j;
    j["answer"] = pred.answer;
    j["type"] = answer_type_name(pred.type);
    nlohmann::ordered_json sp = nlohmann::ordered_json::array();
    for (auto [d, s] : pred.supporting) sp.push_back({d, s});
    j["supporting"] = sp;
    auto logits = [](const Tensor& t) {
        std::vector<double> v(t.data->begin(), t.data->end());
        return v;
    };
    j["type_logits"] = logits(pred.type_logits);
    j["sp_logits"] = logits(pred.sp_logits);
    return j;
}

int run(int argc, char** argv) {
    CLI::App app{"graph-enriched multi-document question answering"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "write a synthetic multi-hop corpus");
    int gen_n = 32;
    int gen_vocab = 40;
    uint64_t gen_seed = 1;
    std::string gen_out;
    gen->add_option("--n", gen_n, "number of examples");
    gen->add_option("--vocab", gen_vocab, "synthetic vocabulary size");
    gen->add_option("--seed", gen_seed, "RNG seed");
    gen->add_option("--out", gen_out, "output JSON path")->required();

    // train
    auto* tr = app.add_subcommand("train", "train a model");
    std::string tr_config;
    ConfigFlags tr_flags;
    tr->add_option("--config", tr_config, "flat key=value config file");
    tr_flags.attach(tr);

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint; prints metrics as JSON");
    std::string ev_checkpoint, ev_data, ev_embeddings;
    double ev_threshold = 0.5;
    ev->add_option("--checkpoint", ev_checkpoint)->required();
    ev->add_option("--data", ev_data, "corpus to evaluate (JSON)")->required();
    ev->add_option("--embeddings", ev_embeddings, "pretrained embedding table");
    ev->add_option("--sp-threshold", ev_threshold, "supporting-fact sigmoid threshold");

    // predict
    auto* pr = app.add_subcommand("predict", "decode one example; prints the prediction as JSON");
    std::string pr_checkpoint, pr_data, pr_embeddings;
    int pr_index = 0;
    pr->add_option("--checkpoint", pr_checkpoint)->required();
    pr->add_option("--data", pr_data, "corpus (JSON)")->required();
    pr->add_option("--embeddings", pr_embeddings, "pretrained embedding table");
    pr->add_option("--index", pr_index, "example index within the corpus");

    // inspect-topology
    auto* it = app.add_subcommand("inspect-topology", "dump the adjacency of one example");
    std::string it_data, it_embeddings;
    int it_index = 0;
    int it_emb_dim = 100;
    double it_lambda = 0.05;
    uint64_t it_seed = 1;
    it->add_option("--data", it_data, "corpus (JSON)")->required();
    it->add_option("--embeddings", it_embeddings, "pretrained embedding table");
    it->add_option("--index", it_index, "example index within the corpus");
    it->add_option("--emb-dim", it_emb_dim, "embedding dimension (random table fallback)");
    it->add_option("--lambda", it_lambda, "similarity mixing weight");
    it->add_option("--seed", it_seed, "seed for the random table fallback");

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        save_hotpot_json(generate_synthetic(gen_n, gen_vocab, gen_seed), gen_out);
        std::cerr << "wrote " << gen_n << " examples to " << gen_out << "\n";
        return 0;
    }

    if (tr->parsed()) {
        TrainConfig cfg = tr_flags.resolve(tr_config);
        if (cfg.train_path.empty()) throw ContractError("train: --train (or train_path) required");
        std::vector<Example> train_set = load_hotpot_json(cfg.train_path);
        std::vector<Example> dev_set;
        if (!cfg.dev_path.empty()) dev_set = load_hotpot_json(cfg.dev_path);

        std::vector<Example> all = train_set;
        all.insert(all.end(), dev_set.begin(), dev_set.end());
        Vocabulary vocab = make_vocab(cfg.embeddings_path, all, cfg.dims.emb_dim, cfg.seed);

        std::vector<EpochLog> log;
        train(cfg, train_set, dev_set, vocab, &log);
        for (const EpochLog& e : log) {
            std::printf("epoch %d  loss %.6f", e.epoch, e.mean_loss);
            if (!dev_set.empty()) std::printf("  dev_f1 %.4f", e.dev_f1);
            std::printf("\n");
        }
        return 0;
    }

    if (ev->parsed()) {
        Model model = load_checkpoint(ev_checkpoint);
        std::vector<Example> data = load_hotpot_json(ev_data);
        Vocabulary vocab = make_vocab(ev_embeddings, data, model.dims().emb_dim, model.seed());
        std::cout << evaluate(model, data, vocab, ev_threshold).to_json() << "\n";
        return 0;
    }

    if (pr->parsed()) {
        Model model = load_checkpoint(pr_checkpoint);
        std::vector<Example> data = load_hotpot_json(pr_data);
        if (pr_index < 0 || pr_index >= static_cast<int>(data.size())) {
            throw ContractError("predict: index out of range");
        }
        Vocabulary vocab = make_vocab(pr_embeddings, data, model.dims().emb_dim, model.seed());
        std::cout << prediction_to_json(model.forward(data[pr_index], vocab, Mode::Eval)).dump(1)
                  << "\n";
        return 0;
    }

    if (it->parsed()) {
        std::vector<Example> data = load_hotpot_json(it_data);
        if (it_index < 0 || it_index >= static_cast<int>(data.size())) {
            throw ContractError("inspect-topology: index out of range");
        }
        Vocabulary vocab = make_vocab(it_embeddings, data, it_emb_dim, it_seed);
        std::cout << topology_to_json(build_topology(data[it_index], vocab, it_lambda)) << "\n";
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
