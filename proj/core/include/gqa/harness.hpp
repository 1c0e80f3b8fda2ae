#pragma once

#include <string>
#include <vector>

#include "gqa/data.hpp"
#include "gqa/model.hpp"

namespace gqa {

struct TrainConfig {
    ModelDims dims;
    double lambda_train = 0.5;
    double lambda_test = 0.05;
    double learning_rate = 0.05;
    double clip_norm = 5.0;
    int batch_size = 4;
    int epochs = 10;
    uint64_t seed = 1;
    bool adam = false;  // Adam-style moments instead of plain SGD
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    LossWeights loss_weights;
    double sp_threshold = 0.5;
    std::string train_path;
    std::string dev_path;
    std::string eval_path;
    std::string embeddings_path;
    std::string checkpoint_path;  // empty disables checkpoint writing
};

// Flat key=value lines; '#' comments and blank lines skipped. Unknown keys
// are rejected so typos fail loudly.
void set_config_key(TrainConfig& cfg, const std::string& key, const std::string& value);
TrainConfig load_config(const std::string& path);

struct ExampleRecord {
    std::string id;
    std::string predicted_answer;
    double em = 0, f1 = 0;
    double sp_em = 0, sp_f1 = 0;
    double joint_em = 0, joint_f1 = 0;
};

struct EvalReport {
    double em = 0, f1 = 0;
    double sp_em = 0, sp_f1 = 0;
    double joint_em = 0, joint_f1 = 0;
    std::vector<ExampleRecord> records;

    // exactly the six metric keys
    std::string to_json() const;
};

// Answer-level exact match and token F1 under the shared normalization.
std::pair<double, double> em_f1(const std::string& predicted, const std::string& gold);

EvalReport evaluate(const Model& model, const std::vector<Example>& dataset,
                    const Vocabulary& vocab, double sp_threshold = 0.5);

struct EpochLog {
    int epoch = 0;
    double mean_loss = 0;
    double dev_f1 = 0;
};

// Mini-batch gradient descent; deterministic for a fixed config. Writes a
// checkpoint after every epoch and keeps the best dev-F1 model at
// "<checkpoint_path>.best" when a dev set is supplied.
Model train(const TrainConfig& cfg, const std::vector<Example>& train_set,
            const std::vector<Example>& dev_set, const Vocabulary& vocab,
            std::vector<EpochLog>* log = nullptr);

}  // namespace gqa
