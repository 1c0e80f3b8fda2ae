#include "gqa/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace gqa {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos;
        int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ParseError("config: bad integer for " + key + ": \"" + v + "\"");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ParseError("config: bad number for " + key + ": \"" + v + "\"");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ParseError("config: bad boolean for " + key + ": \"" + v + "\"");
}

}  // namespace

void set_config_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "emb_dim") cfg.dims.emb_dim = to_int(key, value);
    else if (key == "char_emb_dim") cfg.dims.char_emb_dim = to_int(key, value);
    else if (key == "char_cnn_dim") cfg.dims.char_cnn_dim = to_int(key, value);
    else if (key == "enc_hidden") cfg.dims.enc_hidden = to_int(key, value);
    else if (key == "attn_dim") cfg.dims.attn_dim = to_int(key, value);
    else if (key == "sent_hidden") cfg.dims.sent_hidden = to_int(key, value);
    else if (key == "ggnn_hidden") cfg.dims.ggnn_hidden = to_int(key, value);
    else if (key == "word_hidden") cfg.dims.word_hidden = to_int(key, value);
    else if (key == "span_hidden") cfg.dims.span_hidden = to_int(key, value);
    else if (key == "type_pool_dim") cfg.dims.type_pool_dim = to_int(key, value);
    else if (key == "steps") cfg.dims.ggnn_steps = to_int(key, value);
    else if (key == "lambda_train") cfg.lambda_train = to_double(key, value);
    else if (key == "lambda_test") cfg.lambda_test = to_double(key, value);
    else if (key == "learning_rate") cfg.learning_rate = to_double(key, value);
    else if (key == "clip_norm") cfg.clip_norm = to_double(key, value);
    else if (key == "batch_size") cfg.batch_size = to_int(key, value);
    else if (key == "epochs") cfg.epochs = to_int(key, value);
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(std::stoull(value));
    else if (key == "adam") cfg.adam = to_bool(key, value);
    else if (key == "sp_weight") cfg.loss_weights.sp = to_double(key, value);
    else if (key == "type_weight") cfg.loss_weights.type = to_double(key, value);
    else if (key == "sp_threshold") cfg.sp_threshold = to_double(key, value);
    else if (key == "train_path") cfg.train_path = value;
    else if (key == "dev_path") cfg.dev_path = value;
    else if (key == "eval_path") cfg.eval_path = value;
    else if (key == "embeddings_path") cfg.embeddings_path = value;
    else if (key == "checkpoint_path") cfg.checkpoint_path = value;
    else throw ParseError("config: unknown key \"" + key + "\"");
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config " + path);
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos) {
            throw ParseError("config: line " + std::to_string(lineno) + " is not key=value");
        }
        set_config_key(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    return cfg;
}

namespace {

struct PrecRec {
    double em = 0, f1 = 0, prec = 0, rec = 0;
};

PrecRec answer_scores(const std::string& predicted, const std::string& gold) {
    std::vector<std::string> p = normalize_answer_tokens(predicted);
    std::vector<std::string> g = normalize_answer_tokens(gold);
    PrecRec r;
    r.em = (p == g) ? 1.0 : 0.0;
    if (p.empty() && g.empty()) return {1.0, 1.0, 1.0, 1.0};
    if (p.empty() || g.empty()) return r;
    std::map<std::string, int> gold_counts;
    for (const auto& t : g) ++gold_counts[t];
    int overlap = 0;
    for (const auto& t : p) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            ++overlap;
            --it->second;
        }
    }
    if (overlap == 0) return r;
    r.prec = static_cast<double>(overlap) / p.size();
    r.rec = static_cast<double>(overlap) / g.size();
    r.f1 = 2.0 * r.prec * r.rec / (r.prec + r.rec);
    return r;
}

PrecRec supporting_scores(const std::set<std::pair<int, int>>& predicted,
                          const std::set<std::pair<int, int>>& gold) {
    PrecRec r;
    r.em = (predicted == gold) ? 1.0 : 0.0;
    if (predicted.empty() && gold.empty()) return {1.0, 1.0, 1.0, 1.0};
    if (predicted.empty() || gold.empty()) return r;
    int overlap = 0;
    for (const auto& x : predicted) overlap += gold.count(x);
    if (overlap == 0) return r;
    r.prec = static_cast<double>(overlap) / predicted.size();
    r.rec = static_cast<double>(overlap) / gold.size();
    r.f1 = 2.0 * r.prec * r.rec / (r.prec + r.rec);
    return r;
}

}  // namespace

std::pair<double, double> em_f1(const std::string& predicted, const std::string& gold) {
    PrecRec r = answer_scores(predicted, gold);
    return {r.em, r.f1};
}

EvalReport evaluate(const Model& model, const std::vector<Example>& dataset,
                    const Vocabulary& vocab, double sp_threshold) {
    EvalReport report;
    report.records.reserve(dataset.size());
    for (const Example& ex : dataset) {
        Prediction pred = model.forward(ex, vocab, Mode::Eval, sp_threshold);
        PrecRec ans = answer_scores(pred.answer, ex.gold_answer);
        PrecRec sp = supporting_scores(pred.supporting, ex.gold_supporting);

        ExampleRecord rec;
        rec.id = ex.id;
        rec.predicted_answer = pred.answer;
        rec.em = ans.em;
        rec.f1 = ans.f1;
        rec.sp_em = sp.em;
        rec.sp_f1 = sp.f1;
        // joint: multiply precisions/recalls before the harmonic mean
        rec.joint_em = ans.em * sp.em;
        double jp = ans.prec * sp.prec;
        double jr = ans.rec * sp.rec;
        rec.joint_f1 = (jp + jr > 0) ? 2.0 * jp * jr / (jp + jr) : 0.0;
        report.records.push_back(rec);

        report.em += rec.em;
        report.f1 += rec.f1;
        report.sp_em += rec.sp_em;
        report.sp_f1 += rec.sp_f1;
        report.joint_em += rec.joint_em;
        report.joint_f1 += rec.joint_f1;
    }
    double n = dataset.empty() ? 1.0 : static_cast<double>(dataset.size());
    report.em /= n;
    report.f1 /= n;
    report.sp_em /= n;
    report.sp_f1 /= n;
    report.joint_em /= n;
    report.joint_f1 /= n;
    return report;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["em"] = em;
    j["f1"] = f1;
    j["sp_em"] = sp_em;
    j["sp_f1"] = sp_f1;
    j["joint_em"] = joint_em;
    j["joint_f1"] = joint_f1;
    return j.dump(1);
}

Model train(const TrainConfig& cfg, const std::vector<Example>& train_set,
            const std::vector<Example>& dev_set, const Vocabulary& vocab,
            std::vector<EpochLog>* log) {
    if (train_set.empty()) throw ContractError("train: empty training set");
    if (cfg.batch_size < 1) throw ContractError("train: batch_size must be >= 1");
    if (cfg.epochs < 1) throw ContractError("train: epochs must be >= 1");

    Model model(cfg.dims, cfg.lambda_train, cfg.lambda_test, cfg.seed);

    std::vector<Tensor*> params;
    model.visit_params([&](const std::string&, Tensor& t) { params.push_back(&t); });

    std::vector<GoldSpan> spans;
    spans.reserve(train_set.size());
    for (const Example& ex : train_set) {
        GoldSpan s = locate_gold_span(ex);
        if (ex.gold_type == AnswerType::Span && !s.has_span) {
            throw ContractError("train: gold answer of \"" + ex.id +
                                "\" is not a span of any sentence");
        }
        spans.push_back(s);
    }

    // Adam moment buffers, allocated lazily
    std::vector<std::vector<double>> adam_m, adam_v;
    if (cfg.adam) {
        for (Tensor* p : params) {
            adam_m.emplace_back(p->data->size(), 0.0);
            adam_v.emplace_back(p->data->size(), 0.0);
        }
    }
    long long adam_t = 0;

    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    double best_dev_f1 = -1.0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        int n_batches = 0;
        for (size_t off = 0; off < order.size(); off += cfg.batch_size) {
            size_t batch_end = std::min(off + cfg.batch_size, order.size());
            int batch_id = static_cast<int>(off / cfg.batch_size);

            // accumulated gradient over the batch, mean-weighted
            std::vector<std::vector<double>> grad_sum;
            for (Tensor* p : params) grad_sum.emplace_back(p->data->size(), 0.0);
            double batch_loss = 0.0;
            for (size_t k = off; k < batch_end; ++k) {
                const Example& ex = train_set[order[k]];
                Tape tape;
                Tape::Scope scope(tape);
                for (Tensor* p : params) tape.watch(*p);
                Prediction pred = model.forward(ex, vocab, Mode::Train, cfg.sp_threshold);
                Tensor loss = model.loss(pred, ex, spans[order[k]], cfg.loss_weights);
                double lv = loss.item();
                if (!std::isfinite(lv)) {
                    throw NumericError("train: non-finite loss at epoch " +
                                       std::to_string(epoch) + ", batch " +
                                       std::to_string(batch_id) + " (example " + ex.id + ")");
                }
                batch_loss += lv;
                GradMap grads = backward(tape, loss);
                for (size_t pi = 0; pi < params.size(); ++pi) {
                    const Tensor& g = grads.at(params[pi]->node);
                    for (size_t j = 0; j < grad_sum[pi].size(); ++j) {
                        grad_sum[pi][j] += (*g.data)[j];
                    }
                }
            }
            double inv = 1.0 / static_cast<double>(batch_end - off);
            double norm_sq = 0.0;
            for (auto& gs : grad_sum) {
                for (double& g : gs) {
                    g *= inv;
                    norm_sq += g * g;
                }
            }
            double clip = 1.0;
            if (cfg.clip_norm > 0.0 && std::sqrt(norm_sq) > cfg.clip_norm) {
                clip = cfg.clip_norm / std::sqrt(norm_sq);
            }

            if (cfg.adam) {
                ++adam_t;
                double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam_t));
                double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam_t));
                for (size_t pi = 0; pi < params.size(); ++pi) {
                    std::vector<double> v(*params[pi]->data);
                    for (size_t j = 0; j < v.size(); ++j) {
                        double g = grad_sum[pi][j] * clip;
                        adam_m[pi][j] = cfg.adam_beta1 * adam_m[pi][j] + (1 - cfg.adam_beta1) * g;
                        adam_v[pi][j] =
                            cfg.adam_beta2 * adam_v[pi][j] + (1 - cfg.adam_beta2) * g * g;
                        double mhat = adam_m[pi][j] / bc1;
                        double vhat = adam_v[pi][j] / bc2;
                        v[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
                    }
                    *params[pi] = Tensor(params[pi]->shape, std::move(v));
                }
            } else {
                for (size_t pi = 0; pi < params.size(); ++pi) {
                    std::vector<double> v(*params[pi]->data);
                    for (size_t j = 0; j < v.size(); ++j) {
                        v[j] -= cfg.learning_rate * clip * grad_sum[pi][j];
                    }
                    *params[pi] = Tensor(params[pi]->shape, std::move(v));
                }
            }
            epoch_loss += batch_loss * inv;
            ++n_batches;
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.mean_loss = epoch_loss / n_batches;
        if (!dev_set.empty()) {
            entry.dev_f1 = evaluate(model, dev_set, vocab, cfg.sp_threshold).f1;
        }
        if (log) log->push_back(entry);

        if (!cfg.checkpoint_path.empty()) {
            save_checkpoint(model, cfg.checkpoint_path);
            if (!dev_set.empty() && entry.dev_f1 > best_dev_f1) {
                best_dev_f1 = entry.dev_f1;
                save_checkpoint(model, cfg.checkpoint_path + ".best");
            }
        }
    }
    return model;
}

}  // namespace gqa
