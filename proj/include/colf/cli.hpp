#pragma once

// Command implementations behind tools/colf. Each returns a process exit code:
// 0 success, 1 runtime failure, 2 configuration error, 3 refusal to overwrite.
//
// Results directory layout written by cmd_run:
//
//   manifest.json                    cells, statuses, echoed config
//   runs/<label>__seed<k>.csv        per-day rows of one (strategy, seed) cell
//   runs/<label>__seed<k>.json       pooled metrics of that cell
//   memory/<label>__seed<k>.csv      memory reports (colf cells only)
//   diagnostics/item_drift_seed<k>.csv, diagnostics/click_drift_seed<k>.csv
//   summary.csv, summary_days.csv, summary.txt
//
// cmd_report adds report/ with the summary and figure data series.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "colf/config.hpp"
#include "colf/continual.hpp"
#include "colf/error.hpp"
#include "colf/report.hpp"
#include "colf/stream.hpp"
#include "colf/stream_io.hpp"

namespace colf::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kRefused = 3 };

inline constexpr const char* kOutputRootEnv = "COLF_OUTPUT_ROOT";

// Writes to a sibling temporary file, then renames over `path`.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    static std::atomic<unsigned> counter{0};
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) throw Error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Relative output directories live under $COLF_OUTPUT_ROOT when it is set.
inline fs::path resolve_output_dir(const std::string& dir) {
    fs::path p(dir);
    if (p.is_relative()) {
        if (const char* root = std::getenv(kOutputRootEnv); root && *root) return fs::path(root) / p;
    }
    return p;
}

inline std::string cell_name(const std::string& label, std::uint64_t seed) {
    return label + "__seed" + std::to_string(seed);
}

inline std::string run_csv(const continual::RunResult& r) {
    std::ostringstream out;
    out << "strategy,seed,day,auc,logloss,memory_size,train_seconds\n";
    for (const auto& row : r.rows) {
        out << r.strategy << ',' << r.seed << ',' << row.day << ',' << eval::fmt(row.auc, 10) << ','
            << eval::fmt(row.logloss, 10) << ',' << row.memory_size << ',' << eval::fmt(row.train_seconds, 6) << '\n';
    }
    return out.str();
}

inline json json_number(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

inline std::string run_summary_json(const continual::RunResult& r, std::size_t last_k) {
    json j;
    j["strategy"] = r.strategy;
    j["seed"] = r.seed;
    j["days_evaluated"] = r.rows.size();
    j["pooled_auc"] = json_number(r.pooled_auc);
    j["pooled_logloss"] = json_number(r.pooled_logloss);
    j["last_k"] = last_k;
    j["auc_last_k_mean"] = json_number(r.mean_auc_last(last_k));
    j["final_memory_size"] = r.rows.empty() ? 0 : r.rows.back().memory_size;
    return j.dump(2) + "\n";
}

inline std::string memory_csv(const continual::RunResult& r) {
    std::ostringstream out;
    out << "strategy,seed,day,n_partitions,total_size,discarded_days,dropped_irrelevant,cap_truncated\n";
    for (const auto& m : r.memory_reports) {
        out << r.strategy << ',' << r.seed << ',' << m.day << ',' << m.n_partitions << ',' << m.total_size << ',';
        for (std::size_t k = 0; k < m.discarded_days.size(); ++k) out << (k ? ";" : "") << m.discarded_days[k];
        out << ',' << m.dropped_irrelevant << ',' << m.cap_truncated << '\n';
    }
    return out.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s) {
    if (s == "nan") return std::nan("");
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw Error("bad number '" + s + "'");
    return v;
}

inline continual::RunResult read_run(const fs::path& csv, const fs::path& summary) {
    continual::RunResult r;
    std::istringstream in(read_file(csv));
    std::string line;
    std::getline(in, line);
    if (line != "strategy,seed,day,auc,logloss,memory_size,train_seconds") {
        throw Error("unexpected header in '" + csv.string() + "'");
    }
    while (std::getline(in, line)) {
        const auto f = split_csv_line(line);
        if (f.size() != 7) throw Error("malformed row in '" + csv.string() + "'");
        r.strategy = f[0];
        r.seed = std::stoull(f[1]);
        continual::DayResult row;
        row.day = std::stoi(f[2]);
        row.auc = parse_double(f[3]);
        row.logloss = parse_double(f[4]);
        row.memory_size = std::stoull(f[5]);
        row.train_seconds = parse_double(f[6]);
        r.rows.push_back(row);
    }
    const auto j = json::parse(read_file(summary));
    r.strategy = j.at("strategy").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    auto num = [&](const char* key) { return j.at(key).is_null() ? std::nan("") : j.at(key).get<double>(); };
    r.pooled_auc = num("pooled_auc");
    r.pooled_logloss = num("pooled_logloss");
    return r;
}

// ---------------------------------------------------------------------------
// Drift diagnostics

inline std::string item_drift_csv(const stream::ClickStream& s, int base_day) {
    std::ostringstream out;
    out << "gap,new_item_fraction,item_kl\n";
    for (int d = base_day + 1; d <= s.last_day(); ++d) {
        out << d - base_day << ',' << eval::fmt(stream::new_item_fraction(s, base_day, d), 10) << ','
            << eval::fmt(stream::kl_item_dist(s, base_day, d), 10) << '\n';
    }
    return out.str();
}

inline std::string click_drift_csv(const stream::ClickStream& s, int train_day, int max_gap, std::uint64_t seed) {
    std::vector<int> test_days;
    for (int g = 1; g <= max_gap && train_day + g <= s.last_day(); ++g) test_days.push_back(train_day + g);
    stream::ProbeHyper hyper;
    hyper.seed = seed;
    hyper.train.seed = seed;
    std::ostringstream out;
    out << "gap,probe_auc\n";
    for (const auto& p : stream::drift_probe(s, train_day, test_days, hyper)) {
        out << p.gap << ',' << eval::fmt(p.auc, 10) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Commands

inline int config_failure(std::ostream& err, const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
}

inline int cmd_gen(const std::string& config_path, const std::string& out_path, std::ostream& out,
                   std::ostream& err) {
    config::ExperimentConfig cfg;
    try {
        cfg = config::load_experiment(config_path);
        if (!cfg.stream_seed_given) throw ConfigError("stream.seed", "required for gen");
    } catch (const ConfigError& e) {
        return config_failure(err, e);
    }
    try {
        const auto s = stream::generate_stream(cfg.stream);
        std::ostringstream buf;
        stream::write_stream(s, buf);
        write_file_atomic(out_path, buf.str());
        out << "day  samples  items  click_rate\n";
        std::size_t clicks = 0;
        for (const auto& d : s.days) {
            std::set<Id> items;
            std::size_t c = 0;
            for (const auto& x : d.samples) {
                items.insert(x.item);
                c += static_cast<std::size_t>(x.label);
            }
            clicks += c;
            char line[96];
            std::snprintf(line, sizeof line, "%3d  %7zu  %5zu  %.4f\n", d.day, d.size(), items.size(),
                          d.empty() ? 0.0 : static_cast<double>(c) / static_cast<double>(d.size()));
            out << line;
        }
        out << "days " << s.n_days() << ", records " << s.total_samples() << ", click rate "
            << eval::fmt(s.total_samples() ? static_cast<double>(clicks) / static_cast<double>(s.total_samples()) : 0.0, 4)
            << ", written to " << out_path << '\n';
    } catch (const ConfigError& e) {
        return config_failure(err, e);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kOk;
}

struct CellStatus {
    std::string strategy;
    std::uint64_t seed = 0;
    std::string status = "pending";
    std::string error;
};

inline std::string manifest_json(const json& config_echo, const config::ExperimentConfig& cfg,
                                 const std::vector<CellStatus>& cells, const std::vector<std::string>& diagnostics,
                                 bool complete) {
    json j;
    j["format"] = "colf-results";
    j["version"] = 1;
    j["complete"] = complete;
    j["baseline"] = cfg.report.baseline;
    j["last_k"] = cfg.report.last_k;
    j["seeds"] = cfg.seeds;
    json labels = json::array();
    for (const auto& s : cfg.strategies) labels.push_back(s.label());
    j["strategies"] = labels;
    json cj = json::array();
    for (const auto& c : cells) {
        json e;
        const auto name = cell_name(c.strategy, c.seed);
        e["strategy"] = c.strategy;
        e["seed"] = c.seed;
        e["status"] = c.status;
        if (!c.error.empty()) e["error"] = c.error;
        if (c.status == "ok") {
            e["run_csv"] = "runs/" + name + ".csv";
            e["summary_json"] = "runs/" + name + ".json";
        }
        cj.push_back(e);
    }
    j["cells"] = cj;
    j["diagnostics"] = diagnostics;
    j["config"] = config_echo;
    return j.dump(2) + "\n";
}

inline void write_summary_files(const fs::path& dir, const eval::SummaryTable& t) {
    std::ostringstream csv, days, text;
    eval::write_summary_csv(t, csv);
    eval::write_days_csv(t, days);
    eval::write_summary_text(t, text);
    write_file_atomic(dir / "summary.csv", csv.str());
    write_file_atomic(dir / "summary_days.csv", days.str());
    write_file_atomic(dir / "summary.txt", text.str());
}

inline int cmd_run(const std::string& config_path, bool force, std::size_t jobs, std::ostream& out,
                   std::ostream& err) {
    config::ExperimentConfig cfg;
    json echo;
    try {
        echo = config::load_json(config_path);
        cfg = config::parse_experiment(echo);
        config::require_runnable(cfg);
    } catch (const ConfigError& e) {
        return config_failure(err, e);
    }
    const fs::path dir = resolve_output_dir(cfg.output_dir);
    try {
        if (fs::exists(dir) && !fs::is_empty(dir)) {
            if (!force) {
                err << "refusing to overwrite existing output directory " << dir.string() << " (use --force)\n";
                return kRefused;
            }
            if (!fs::exists(dir / "manifest.json")) {
                err << "refusing to clear " << dir.string() << ": it is not a results directory\n";
                return kRefused;
            }
            fs::remove_all(dir);
        }
        fs::create_directories(dir);
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }

    std::optional<stream::ClickStream> dataset;
    if (cfg.dataset) {
        try {
            dataset = stream::read_stream(*cfg.dataset);
        } catch (const std::exception& e) {
            err << "error: dataset: " << e.what() << '\n';
            return kFailure;
        }
    }

    std::vector<CellStatus> cells;
    for (const auto& s : cfg.strategies) {
        for (auto seed : cfg.seeds) cells.push_back({s.label(), seed, "pending", {}});
    }
    std::vector<std::string> diag_files;
    std::mutex mu;
    auto save_manifest = [&](bool complete) {
        write_file_atomic(dir / "manifest.json", manifest_json(echo, cfg, cells, diag_files, complete));
    };
    save_manifest(false);

    std::vector<continual::RunResult> results;
    const std::size_t n_seeds = cfg.seeds.size();
    std::vector<std::optional<continual::RunResult>> slots(cells.size());
    bool any_failed = false;
    for (std::size_t si = 0; si < n_seeds; ++si) {
        const auto seed = cfg.seeds[si];
        stream::ClickStream s;
        try {
            if (dataset) {
                s = *dataset;
            } else {
                auto sc = cfg.stream;
                sc.seed = seed;
                s = stream::generate_stream(sc);
            }
            if (cfg.report.diagnostics && s.n_days() >= 2 && cfg.report.probe_train_day < s.last_day() &&
                cfg.report.probe_train_day >= s.first_day()) {
                const auto item = "diagnostics/item_drift_seed" + std::to_string(seed) + ".csv";
                const auto click = "diagnostics/click_drift_seed" + std::to_string(seed) + ".csv";
                write_file_atomic(dir / item, item_drift_csv(s, cfg.report.probe_train_day));
                write_file_atomic(dir / click,
                                  click_drift_csv(s, cfg.report.probe_train_day, cfg.report.probe_max_gap, seed));
                diag_files.push_back(item);
                diag_files.push_back(click);
            }
        } catch (const std::exception& e) {
            err << "error: seed " << seed << ": " << e.what() << '\n';
            for (std::size_t k = 0; k < cfg.strategies.size(); ++k) {
                auto& c = cells[k * n_seeds + si];
                c.status = "failed";
                c.error = e.what();
            }
            any_failed = true;
            save_manifest(false);
            continue;
        }

        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t k = next++; k < cfg.strategies.size(); k = next++) {
                const std::size_t idx = k * n_seeds + si;
                const auto t0 = std::chrono::steady_clock::now();
                try {
                    auto r = continual::run_continual(s, continual::seeded(cfg.strategies[k], seed));
                    const auto name = cell_name(r.strategy, seed);
                    write_file_atomic(dir / "runs" / (name + ".csv"), run_csv(r));
                    write_file_atomic(dir / "runs" / (name + ".json"), run_summary_json(r, cfg.report.last_k));
                    if (!r.memory_reports.empty()) write_file_atomic(dir / "memory" / (name + ".csv"), memory_csv(r));
                    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
                    std::lock_guard lock(mu);
                    err << "[run] " << name << " ok, last-" << cfg.report.last_k << " auc "
                        << eval::fmt(r.mean_auc_last(cfg.report.last_k), 4) << " (" << eval::fmt(dt.count(), 1)
                        << "s)\n";
                    cells[idx].status = "ok";
                    slots[idx] = std::move(r);
                    save_manifest(false);
                } catch (const std::exception& e) {
                    std::lock_guard lock(mu);
                    err << "[run] " << cell_name(cells[idx].strategy, seed) << " failed: " << e.what() << '\n';
                    cells[idx].status = "failed";
                    cells[idx].error = e.what();
                    any_failed = true;
                    save_manifest(false);
                }
            }
        };
        const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, cfg.strategies.size()));
        if (n_threads == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }
    }
    for (auto& r : slots) {
        if (r) results.push_back(std::move(*r));
    }

    try {
        save_manifest(!any_failed);
        const bool baseline_ok = std::any_of(results.begin(), results.end(),
                                             [&](const auto& r) { return r.strategy == cfg.report.baseline; });
        if (baseline_ok) {
            const auto table = eval::aggregate(results, cfg.report.baseline, cfg.report.last_k);
            write_summary_files(dir, table);
            eval::write_summary_text(table, out);
        } else {
            err << "baseline '" << cfg.report.baseline << "' has no successful runs; summary skipped\n";
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    out << "results in " << dir.string() << '\n';
    return any_failed ? kFailure : kOk;
}

inline int cmd_report(const std::string& dir_arg, std::ostream& out, std::ostream& err) {
    const fs::path dir(dir_arg);
    if (!fs::is_directory(dir) || fs::is_empty(dir) || !fs::exists(dir / "manifest.json")) {
        err << "config error: " << dir_arg << " holds no results manifest\n";
        return kConfigError;
    }
    try {
        const auto manifest = json::parse(read_file(dir / "manifest.json"));
        if (manifest.value("format", "") != "colf-results") throw Error("not a colf results manifest");
        std::vector<continual::RunResult> results;
        std::vector<std::string> order;
        for (const auto& c : manifest.at("cells")) {
            if (c.at("status") != "ok") {
                err << "skipping " << c.at("strategy").get<std::string>() << " seed " << c.at("seed") << " ("
                    << c.at("status").get<std::string>() << ")\n";
                continue;
            }
            results.push_back(read_run(dir / c.at("run_csv").get<std::string>(),
                                       dir / c.at("summary_json").get<std::string>()));
        }
        if (results.empty()) {
            err << "config error: " << dir_arg << " holds no completed runs\n";
            return kConfigError;
        }
        std::string baseline = manifest.value("baseline", "incremental");
        if (std::none_of(results.begin(), results.end(), [&](const auto& r) { return r.strategy == baseline; })) {
            baseline = results.front().strategy;
        }
        const std::size_t last_k = manifest.value("last_k", std::size_t{5});
        const auto table = eval::aggregate(results, baseline, last_k);
        const fs::path rep = dir / "report";
        write_summary_files(rep, table);

        std::ostringstream by_day;
        by_day << "strategy,day,auc_mean,auc_std\n";
        for (const auto& s : table.rows) {
            for (const auto& d : s.days) {
                by_day << s.strategy << ',' << d.day << ',' << eval::fmt(d.auc_mean) << ',' << eval::fmt(d.auc_std)
                       << '\n';
            }
        }
        write_file_atomic(rep / "fig_auc_by_day.csv", by_day.str());

        // Seed-averaged drift diagnostics.
        std::map<int, std::vector<double>> frac, kl, probe;
        for (const auto& f : manifest.value("diagnostics", std::vector<std::string>{})) {
            std::istringstream in(read_file(dir / f));
            std::string line;
            std::getline(in, line);
            const bool item = line == "gap,new_item_fraction,item_kl";
            while (std::getline(in, line)) {
                const auto v = split_csv_line(line);
                const int gap = std::stoi(v.at(0));
                if (item) {
                    frac[gap].push_back(parse_double(v.at(1)));
                    kl[gap].push_back(parse_double(v.at(2)));
                } else {
                    probe[gap].push_back(parse_double(v.at(1)));
                }
            }
        }
        if (!frac.empty()) {
            std::ostringstream f;
            f << "gap,n_seeds,new_item_fraction_mean,item_kl_mean\n";
            for (const auto& [gap, v] : frac) {
                f << gap << ',' << v.size() << ',' << eval::fmt(eval::mean(v)) << ',' << eval::fmt(eval::mean(kl[gap]))
                  << '\n';
            }
            write_file_atomic(rep / "fig_item_drift.csv", f.str());
        }
        if (!probe.empty()) {
            std::ostringstream f;
            f << "gap,n_seeds,probe_auc_mean,probe_auc_std\n";
            for (const auto& [gap, v] : probe) {
                f << gap << ',' << v.size() << ',' << eval::fmt(eval::mean(v)) << ',' << eval::fmt(eval::stddev(v))
                  << '\n';
            }
            write_file_atomic(rep / "fig_click_drift.csv", f.str());
        }
        eval::write_summary_text(table, out);
        out << "report written to " << rep.string() << '\n';
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kOk;
}

} // namespace colf::cli
