#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpfa/errors.hpp"
#include "mpfa/model.hpp"
#include "mpfa/model_params.hpp"
#include "mpfa/optim.hpp"
#include "mpfa/temporal_state.hpp"
#include "mpfa/train_eval.hpp"

namespace mpfa {

using nlohmann::json;

inline json tensor_to_json(const Tensor& t) {
    return json{{"shape", t.shape}, {"data", t.data}};
}

inline Tensor tensor_from_json(const json& j) {
    return Tensor(j.at("shape").get<std::vector<long>>(), j.at("data").get<std::vector<double>>());
}

// ---- run configuration -----------------------------------------------------

inline json train_config_to_json(const TrainConfig& c) {
    return json{{"batch_size", c.batch_size},
                {"lr", c.lr},
                {"epochs", c.epochs},
                {"patience", c.patience},
                {"grad_clip", c.grad_clip},
                {"lr_min", c.lr_min},
                {"dropout", c.dropout},
                {"k_neighbors", c.k_neighbors},
                {"d", c.d},
                {"d_h", c.d_h},
                {"d_t", c.d_t},
                {"seed", c.seed},
                {"ablation", c.ablation},
                {"train_frac", c.train_frac},
                {"val_frac", c.val_frac},
                {"mode", c.mode},
                {"inductive_fraction", c.inductive_fraction},
                {"repeats", c.repeats}};
}

/// Applies the keys present in `j` onto `c`; unknown keys are rejected.
inline void train_config_merge_json(TrainConfig& c, const json& j,
                                    const std::vector<std::string>& extra_allowed = {}) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k == "batch_size")
            c.batch_size = it.value().get<long>();
        else if (k == "lr")
            c.lr = it.value().get<double>();
        else if (k == "epochs")
            c.epochs = it.value().get<int>();
        else if (k == "patience")
            c.patience = it.value().get<int>();
        else if (k == "grad_clip")
            c.grad_clip = it.value().get<double>();
        else if (k == "lr_min")
            c.lr_min = it.value().get<double>();
        else if (k == "dropout")
            c.dropout = it.value().get<double>();
        else if (k == "k_neighbors")
            c.k_neighbors = it.value().get<int>();
        else if (k == "d")
            c.d = it.value().get<int>();
        else if (k == "d_h")
            c.d_h = it.value().get<int>();
        else if (k == "d_t")
            c.d_t = it.value().get<int>();
        else if (k == "seed")
            c.seed = it.value().get<std::uint64_t>();
        else if (k == "ablation")
            c.ablation = it.value().get<std::string>();
        else if (k == "train_frac")
            c.train_frac = it.value().get<double>();
        else if (k == "val_frac")
            c.val_frac = it.value().get<double>();
        else if (k == "mode")
            c.mode = it.value().get<std::string>();
        else if (k == "inductive_fraction")
            c.inductive_fraction = it.value().get<double>();
        else if (k == "repeats")
            c.repeats = it.value().get<int>();
        else if (std::find(extra_allowed.begin(), extra_allowed.end(), k) == extra_allowed.end())
            throw ConfigError("unknown config key '" + k + "'");
    }
}

/// Deterministic run identifier: hash of the full config echo plus context.
inline std::string run_id_of(const json& config_echo) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(config_echo.dump())));
    return std::string(buf);
}

// ---- checkpoints ------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline json state_snapshot_to_json(const TemporalState::Snapshot& s) {
    json nodes = json::array();
    for (const NodeState& n : s.nodes)
        nodes.push_back(json{{"h", n.h.data},
                             {"z", n.z_last.data},
                             {"t_last", n.t_last},
                             {"exists", n.exists},
                             {"updates", n.update_count}});
    json hist = json::array();
    for (const auto& entries : s.hist) {
        json per_node = json::array();
        for (const HistoryEntry& e : entries)
            per_node.push_back(json{{"partner", e.partner},
                                    {"t", e.t},
                                    {"event", e.event_idx},
                                    {"raw", e.raw_input.data}});
        hist.push_back(std::move(per_node));
    }
    return json{{"num_nodes", s.num_nodes},        {"d", s.d},
                {"d_h", s.d_h},                    {"events_consumed", s.events_consumed},
                {"last_event_idx", s.last_event_idx}, {"nodes", std::move(nodes)},
                {"hist", std::move(hist)}};
}

inline TemporalState::Snapshot state_snapshot_from_json(const json& j) {
    TemporalState::Snapshot s;
    s.num_nodes = j.at("num_nodes").get<int>();
    s.d = j.at("d").get<int>();
    s.d_h = j.at("d_h").get<int>();
    s.events_consumed = j.at("events_consumed").get<long>();
    s.last_event_idx = j.at("last_event_idx").get<long>();
    for (const json& n : j.at("nodes")) {
        NodeState ns;
        ns.h = Tensor::vec(n.at("h").get<std::vector<double>>());
        ns.z_last = Tensor::vec(n.at("z").get<std::vector<double>>());
        ns.t_last = n.at("t_last").get<double>();
        ns.exists = n.at("exists").get<bool>();
        ns.update_count = n.at("updates").get<long>();
        s.nodes.push_back(std::move(ns));
    }
    for (const json& per_node : j.at("hist")) {
        std::vector<HistoryEntry> entries;
        for (const json& e : per_node)
            entries.push_back(HistoryEntry{e.at("partner").get<int>(), e.at("t").get<double>(),
                                           e.at("event").get<long>(),
                                           Tensor::vec(e.at("raw").get<std::vector<double>>())});
        s.hist.push_back(std::move(entries));
    }
    return s;
}

inline void save_checkpoint(const std::string& path, ModelParams& params, const TrainConfig& cfg,
                            const Adam* adam = nullptr,
                            const TemporalState::Snapshot* state = nullptr) {
    json params_j;
    for (const ParamRef& pr : params.registry()) params_j[pr.name] = tensor_to_json(pr.p->v);
    json j{{"format_version", kCheckpointVersion},
           {"kind", "mpfa-checkpoint"},
           {"config", train_config_to_json(cfg)},
           {"edge_dim", params.cfg.edge_dim},
           {"params", std::move(params_j)}};
    if (adam != nullptr) {
        json mo;
        for (const auto& [name, m] : adam->moments())
            mo[name] = json{{"m", m.m.data}, {"v", m.v.data}};
        j["adam"] = json{{"step", adam->step_count()}, {"moments", std::move(mo)}};
    }
    if (state != nullptr) j["state"] = state_snapshot_to_json(*state);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot write checkpoint: " + path);
    f << j.dump(1) << '\n';
}

struct LoadedCheckpoint {
    TrainConfig cfg;
    int edge_dim = 0;
    bool has_state = false;
    TemporalState::Snapshot state;
    bool has_adam = false;
    long adam_step = 0;
};

/// Loads parameters into `params` (must be constructed with matching dims;
/// use the checkpoint's config to build it) and returns the metadata.
inline LoadedCheckpoint load_checkpoint_meta(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot open checkpoint: " + path);
    json j = json::parse(f, nullptr, true);
    if (!j.contains("format_version") || j.at("format_version").get<int>() != kCheckpointVersion)
        throw LoadError("checkpoint format version mismatch in " + path);
    LoadedCheckpoint out;
    train_config_merge_json(out.cfg, j.at("config"));
    out.edge_dim = j.at("edge_dim").get<int>();
    out.has_state = j.contains("state");
    if (out.has_state) out.state = state_snapshot_from_json(j.at("state"));
    out.has_adam = j.contains("adam");
    if (out.has_adam) out.adam_step = j.at("adam").at("step").get<long>();
    return out;
}

inline void load_checkpoint_params(const std::string& path, ModelParams& params,
                                   Adam* adam = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot open checkpoint: " + path);
    json j = json::parse(f, nullptr, true);
    if (!j.contains("format_version") || j.at("format_version").get<int>() != kCheckpointVersion)
        throw LoadError("checkpoint format version mismatch in " + path);
    const json& pj = j.at("params");
    for (const ParamRef& pr : params.registry()) {
        if (!pj.contains(pr.name)) throw LoadError("checkpoint missing parameter '" + pr.name + "'");
        Tensor t = tensor_from_json(pj.at(pr.name));
        if (t.shape != pr.p->v.shape)
            throw LoadError("checkpoint shape mismatch for '" + pr.name + "'");
        pr.p->v = std::move(t);
    }
    if (adam != nullptr && j.contains("adam")) {
        adam->set_step_count(j.at("adam").at("step").get<long>());
        for (const auto& [name, m] : j.at("adam").at("moments").items()) {
            Adam::Moments mo;
            mo.m = Tensor::vec(m.at("m").get<std::vector<double>>());
            mo.v = Tensor::vec(m.at("v").get<std::vector<double>>());
            adam->moments()[name] = std::move(mo);
        }
    }
}

// ---- reports and artifacts --------------------------------------------------

inline json report_to_json(const EvalReport& r, const json& config_echo) {
    json j{{"format_version", 1},
           {"run_id", run_id_of(config_echo)},
           {"task", r.task},
           {"mode", r.mode},
           {"metrics", json{{"ap", r.ap}, {"auc", r.auc}, {"acc", r.acc}}},
           {"n_scored", r.n_scored},
           {"config", config_echo}};
    if (r.best_epoch >= 0) j["best_epoch"] = r.best_epoch;
    if (!r.train_loss_curve.empty())
        j["curves"] = json{{"train_loss", r.train_loss_curve}, {"val_ap", r.val_ap_curve}};
    return j;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot write file: " + path);
    f << text;
}

inline void write_json_file(const std::string& path, const json& j) {
    write_text_file(path, j.dump(1) + "\n");
}

inline void write_attention_csv(const std::string& path, const std::vector<AttnDumpRow>& rows,
                                const json& config_echo) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw LoadError("cannot write file: " + path);
    std::fprintf(f, "# run_id=%s config=%s\n", run_id_of(config_echo).c_str(),
                 config_echo.dump().c_str());
    std::fprintf(f, "event_index,node,perspective,neighbor_rank,dt,weight\n");
    for (const AttnDumpRow& r : rows)
        std::fprintf(f, "%ld,%d,%s,%d,%.17g,%.17g\n", r.event_idx, r.node, r.perspective,
                     r.neighbor_rank, r.dt, r.weight);
    std::fclose(f);
}

inline void write_sweep_csv(const std::string& path, const std::string& param,
                            const std::vector<SweepRow>& rows, const json& config_echo) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw LoadError("cannot write file: " + path);
    std::fprintf(f, "# run_id=%s config=%s\n", run_id_of(config_echo).c_str(),
                 config_echo.dump().c_str());
    std::fprintf(f, "%s,ap,auc,acc\n", param.c_str());
    for (const SweepRow& r : rows)
        std::fprintf(f, "%.17g,%.17g,%.17g,%.17g\n", r.value, r.ap, r.auc, r.acc);
    std::fclose(f);
}

inline void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows,
                               const json& config_echo) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw LoadError("cannot write file: " + path);
    std::fprintf(f, "# run_id=%s config=%s\n", run_id_of(config_echo).c_str(),
                 config_echo.dump().c_str());
    std::fprintf(f, "variant,ap,auc,acc\n");
    for (const AblationRow& r : rows)
        std::fprintf(f, "%s,%.17g,%.17g,%.17g\n", r.variant.c_str(), r.ap, r.auc, r.acc);
    std::fclose(f);
}

inline void write_curves_csv(const std::string& path, const EvalReport& r,
                             const json& config_echo) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw LoadError("cannot write file: " + path);
    std::fprintf(f, "# run_id=%s config=%s\n", run_id_of(config_echo).c_str(),
                 config_echo.dump().c_str());
    std::fprintf(f, "epoch,train_loss,val_ap\n");
    for (std::size_t i = 0; i < r.train_loss_curve.size(); ++i)
        std::fprintf(f, "%zu,%.17g,%.17g\n", i + 1, r.train_loss_curve[i],
                     i < r.val_ap_curve.size() ? r.val_ap_curve[i] : 0.0);
    std::fclose(f);
}

inline std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot hash file: " + path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[1 << 16];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!f) break;
    }
    return h;
}

/// Manifest of a run: config echo, run id, wall-clock, and the produced
/// files with content hashes. Wall-clock lives here (and only here) so the
/// reports themselves stay byte-identical across identical-seed runs.
inline void write_manifest(const std::string& out_dir, const json& config_echo,
                           const std::vector<std::string>& files, double wall_clock_seconds) {
    json outputs = json::array();
    for (const std::string& f : files) {
        char hex[17];
        std::snprintf(hex, sizeof(hex), "%016llx",
                      static_cast<unsigned long long>(fnv1a64_file(f)));
        outputs.push_back(json{{"path", std::filesystem::path(f).filename().string()},
                               {"fnv1a64", std::string(hex)}});
    }
    json j{{"run_id", run_id_of(config_echo)},
           {"config", config_echo},
           {"wall_clock_seconds", wall_clock_seconds},
           {"outputs", std::move(outputs)}};
    write_json_file((std::filesystem::path(out_dir) / "manifest.json").string(), j);
}

}  // namespace mpfa
