// tensorciq: noisy symmetric tensor completion with entrywise confidence
// intervals. Subcommands: simulate, complete, uq, experiment.

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "tensorciq/estimator.hpp"
#include "tensorciq/harness.hpp"
#include "tensorciq/io.hpp"
#include "tensorciq/synth.hpp"
#include "tensorciq/uq.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tensorciq;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitAlgorithm = 3;
constexpr int kExitInternal = 4;

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json load_config(const fs::path& path, const std::vector<std::string>& required,
                 const std::vector<std::string>& optional) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file " + path.string());
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError("config " + path.string() + ": " + e.what());
    }
    if (!cfg.is_object()) throw InputError("config must be a flat JSON object");
    for (const auto& [key, value] : cfg.items()) {
        (void)value;
        const bool known =
            std::find(required.begin(), required.end(), key) != required.end() ||
            std::find(optional.begin(), optional.end(), key) != optional.end();
        if (!known) throw InputError("config " + path.string() + ": unknown key '" + key + "'");
    }
    for (const auto& key : required)
        if (!cfg.contains(key))
            throw InputError("config " + path.string() + ": missing key '" + key + "'");
    return cfg;
}

void write_manifest(const fs::path& out_dir, const std::string& command, const json& config,
                    std::uint64_t master_seed, const std::vector<std::string>& outputs,
                    double wall_time) {
    json m;
    m["tool"] = "tensorciq";
    m["version"] = kVersion;
    m["command"] = command;
    m["config"] = config;
    m["master_seed"] = master_seed;
    m["outputs"] = outputs;
    m["wall_time_sec"] = wall_time;
    io::write_atomic(out_dir / "manifest.json", m.dump(2) + "\n");
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

InstanceConfig instance_from_json(const json& cfg, const char* seed_key) {
    InstanceConfig icfg;
    icfg.d = cfg.at("d").get<int>();
    icfg.r = cfg.at("r").get<int>();
    icfg.p = cfg.at("p").get<double>();
    icfg.sigma = cfg.at("sigma").get<double>();
    icfg.beta = cfg.at("beta").get<double>();
    icfg.seed = cfg.at(seed_key).get<std::uint64_t>();
    try {
        icfg.validate();
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    return icfg;
}

int cmd_simulate(const fs::path& config_path, const fs::path& out_dir) {
    Stopwatch watch;
    const json cfg = load_config(config_path, {"d", "r", "p", "sigma", "beta", "seed"}, {});
    const InstanceConfig icfg = instance_from_json(cfg, "seed");
    fs::create_directories(out_dir);
    const Instance inst = make_instance(icfg);

    std::vector<std::string> outputs = {"observations.txt", "factors_true.txt"};
    io::write_atomic(out_dir / "observations.txt", io::serialize_observations(inst.obs));
    io::write_atomic(out_dir / "factors_true.txt", io::serialize_factors(inst.truth));
    if (inst.noise) {
        io::write_atomic(out_dir / "noise_spec.txt", io::serialize_noise_spec(*inst.noise));
        outputs.push_back("noise_spec.txt");
    }
    write_manifest(out_dir, "simulate", cfg, icfg.seed, outputs, watch.seconds());
    std::cout << "simulate: wrote " << inst.obs.size() << " observations to " << out_dir.string()
              << "\n";
    return kExitOk;
}

int cmd_complete(const fs::path& obs_path, int rank, std::uint64_t seed,
                 const std::optional<double>& eta, const std::optional<int>& t0,
                 const std::optional<int>& restarts, const std::optional<double>& eps_th,
                 const fs::path& out_dir) {
    Stopwatch watch;
    if (rank < 1) throw InputError("--rank must be positive");
    const ObservationSet obs = io::read_observations(obs_path);
    EstimatorParams params = default_params(obs.d(), rank, obs.p());
    if (eta) params.eta = *eta;
    if (t0) params.t0 = *t0;
    if (restarts) params.L = *restarts;
    if (eps_th) params.eps_th = *eps_th;
    try {
        params.validate();
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }

    fs::create_directories(out_dir);
    const Completion fit = complete(obs, rank, params, seed);
    io::write_atomic(out_dir / "factors_est.txt", io::serialize_factors(fit.factors));

    json summary;
    summary["d"] = obs.d();
    summary["r"] = rank;
    summary["p"] = obs.p();
    summary["observations"] = obs.size();
    summary["initial_loss"] = fit.loss_trajectory.front();
    summary["final_loss"] = fit.loss_trajectory.back();
    summary["iterations"] = params.t0;
    summary["loss_trajectory"] = fit.loss_trajectory;
    io::write_atomic(out_dir / "fit.json", summary.dump(2) + "\n");

    json cfg;
    cfg["obs"] = obs_path.string();
    cfg["rank"] = rank;
    cfg["seed"] = seed;
    cfg["L"] = params.L;
    cfg["eps_th"] = params.eps_th;
    cfg["eta"] = params.eta;
    cfg["t0"] = params.t0;
    write_manifest(out_dir, "complete", cfg, seed, {"factors_est.txt", "fit.json"},
                   watch.seconds());
    std::cout << "complete: final loss " << io::format_double(fit.loss_trajectory.back())
              << ", factors written to " << (out_dir / "factors_est.txt").string() << "\n";
    return kExitOk;
}

int cmd_uq(const fs::path& obs_path, const fs::path& factors_path, double alpha,
           const std::vector<std::string>& entry_specs, bool all_entries,
           const fs::path& out_dir) {
    Stopwatch watch;
    if (!(alpha > 0.0) || !(alpha < 1.0))
        throw InputError("--alpha must lie strictly inside (0, 1)");
    const ObservationSet obs = io::read_observations(obs_path);
    const FactorMatrix U = io::read_factors(factors_path);
    if (U.d() != obs.d())
        throw InputError("factors dimension d=" + std::to_string(U.d()) +
                         " does not match observations d=" + std::to_string(obs.d()));

    std::vector<CanonicalTriple> targets;
    if (all_entries) {
        for_each_canonical(obs.d(), [&](const CanonicalTriple& t) { targets.push_back(t); });
    } else {
        for (const auto& spec : entry_specs) {
            int i = 0, j = 0, k = 0;
            char c1 = 0, c2 = 0;
            std::istringstream ss(spec);
            if (!(ss >> i >> c1 >> j >> c2 >> k) || c1 != ',' || c2 != ',')
                throw InputError("--entry expects 'i,j,k', got '" + spec + "'");
            if (i < 1 || j < 1 || k < 1 || i > obs.d() || j > obs.d() || k > obs.d())
                throw InputError("--entry indices out of range for d=" + std::to_string(obs.d()));
            targets.push_back(canonicalize(i - 1, j - 1, k - 1, obs.d()));
        }
    }

    fs::create_directories(out_dir);
    const std::vector<double> ehat = estimate_noise(obs, U);
    const std::vector<CovarianceEstimate> sigmas = estimate_sigma_all(U, ehat, obs, obs.p());

    std::vector<std::tuple<int, int, double, double>> factor_rows;
    for (int l = 0; l < U.r(); ++l)
        for (int k = 0; k < U.d(); ++k) {
            const ConfidenceInterval ci = ci_factor(U.entry(k, l), sigmas[k], l, alpha);
            factor_rows.emplace_back(l, k, ci.center, ci.half_width);
        }
    io::write_atomic(out_dir / "factor_ci.csv", io::csv_factor_cis(factor_rows));

    std::vector<std::string> outputs = {"factor_ci.csv"};
    if (!targets.empty()) {
        std::vector<std::tuple<CanonicalTriple, double, double>> entry_rows;
        for (const auto& t : targets) {
            const EntryVariance v = entry_variance(U, sigmas, t);
            const ConfidenceInterval ci = ci_entry(cp_eval(U, t), v, alpha);
            entry_rows.emplace_back(t, ci.center, ci.half_width);
        }
        io::write_atomic(out_dir / "entry_ci.csv", io::csv_entry_cis(entry_rows));
        outputs.push_back("entry_ci.csv");
    }

    json cfg;
    cfg["obs"] = obs_path.string();
    cfg["factors"] = factors_path.string();
    cfg["alpha"] = alpha;
    cfg["all_entries"] = all_entries;
    cfg["entries"] = entry_specs;
    write_manifest(out_dir, "uq", cfg, 0, outputs, watch.seconds());
    std::cout << "uq: wrote " << factor_rows.size() << " factor CIs and " << targets.size()
              << " entry CIs to " << out_dir.string() << "\n";
    return kExitOk;
}

int cmd_experiment(const fs::path& config_path, int jobs, bool all_entries,
                   const fs::path& out_dir) {
    Stopwatch watch;
    const json cfg =
        load_config(config_path, {"d", "r", "p", "sigma", "beta", "alpha", "trials", "master_seed"},
                    {"entry_sample", "L", "eps_th", "eta", "t0"});
    ExperimentConfig ecfg;
    ecfg.instance = instance_from_json(cfg, "master_seed");
    ecfg.master_seed = ecfg.instance.seed;
    ecfg.alpha = cfg.at("alpha").get<double>();
    ecfg.trials = cfg.at("trials").get<int>();
    if (cfg.contains("entry_sample")) ecfg.entry_sample = cfg.at("entry_sample").get<int>();
    if (all_entries) ecfg.entry_sample = 0;
    if (cfg.contains("L") || cfg.contains("eps_th") || cfg.contains("eta") || cfg.contains("t0")) {
        EstimatorParams params = default_params(ecfg.instance.d, ecfg.instance.r, ecfg.instance.p);
        if (cfg.contains("L")) params.L = cfg.at("L").get<int>();
        if (cfg.contains("eps_th")) params.eps_th = cfg.at("eps_th").get<double>();
        if (cfg.contains("eta")) params.eta = cfg.at("eta").get<double>();
        if (cfg.contains("t0")) params.t0 = cfg.at("t0").get<int>();
        ecfg.params = params;
    }
    try {
        ecfg.validate();
        ecfg.resolved_params().validate();
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }

    fs::create_directories(out_dir);
    const std::vector<CanonicalTriple> tracked =
        sample_tracked_entries(ecfg.instance.d, ecfg.entry_sample, ecfg.master_seed);
    std::vector<TrialReport> reports = run_trials(ecfg, jobs);
    for (const auto& rep : reports)
        if (rep.failed)
            std::cerr << "trial " << rep.trial_index << " failed: " << rep.failure_reason << "\n";
    const AggregateReport agg = aggregate(std::move(reports), ecfg);
    const std::vector<RiskRow> risks = risk_table(agg, ecfg);

    json summary;
    summary["trials_total"] = agg.trials_total;
    summary["trials_failed"] = agg.trials_failed;
    summary["alpha"] = ecfg.alpha;
    summary["tracked_entries"] = tracked.size();
    summary["mean_cr_factor"] = agg.mean_cr_factor;
    summary["std_cr_factor"] = agg.std_cr_factor;
    summary["mean_cr_entry"] = agg.mean_cr_entry;
    summary["std_cr_entry"] = agg.std_cr_entry;
    summary["ks_factor"] = agg.ks_factor;
    summary["ks_entry"] = agg.ks_entry;
    summary["ks_factor_oracle"] = agg.ks_factor_oracle;
    summary["ks_entry_oracle"] = agg.ks_entry_oracle;
    summary["l2_risk_factor"] = agg.l2_risk_factor;
    summary["l2_risk_tensor"] = agg.l2_risk_tensor;
    summary["cr_bound_factor"] = agg.cr_bound_factor;
    summary["cr_bound_tensor"] = agg.cr_bound_tensor;

    io::write_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
    io::write_atomic(out_dir / "coverage_factor.csv",
                     io::csv_factor_coverage(agg, ecfg.instance.d));
    io::write_atomic(out_dir / "coverage_entry.csv", io::csv_entry_coverage(agg, tracked));
    io::write_atomic(out_dir / "qq_factor.csv", io::csv_qq(agg.qq_factor));
    io::write_atomic(out_dir / "qq_entry.csv", io::csv_qq(agg.qq_entry));
    io::write_atomic(out_dir / "risk.csv", io::csv_risk(risks));

    json resolved = cfg;
    resolved["entry_sample"] = ecfg.entry_sample;
    write_manifest(out_dir, "experiment", resolved, ecfg.master_seed,
                   {"summary.json", "coverage_factor.csv", "coverage_entry.csv", "qq_factor.csv",
                    "qq_entry.csv", "risk.csv"},
                   watch.seconds());
    std::cout << "experiment: Mean(CR) factor=" << io::format_double(agg.mean_cr_factor)
              << " entry=" << io::format_double(agg.mean_cr_entry) << ", "
              << agg.trials_failed << " failed trials, results in " << out_dir.string() << "\n";
    return kExitOk;
}

int default_jobs() {
    if (const char* env = std::getenv("TENSORCIQ_JOBS")) {
        const int j = std::atoi(env);
        if (j > 0) return j;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Noisy symmetric low-rank tensor completion with entrywise confidence intervals"};
    app.require_subcommand(1);

    std::string config_path, obs_path, factors_path, out_dir = ".";
    int rank = 0;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    int jobs = default_jobs();
    bool all_entries = false;
    std::vector<std::string> entries;
    std::optional<double> eta, eps_th;
    std::optional<int> t0, restarts;

    auto* sim = app.add_subcommand("simulate", "Generate a synthetic instance");
    sim->add_option("--config", config_path, "JSON config {d,r,p,sigma,beta,seed}")->required();
    sim->add_option("--out-dir", out_dir, "Output directory");

    auto* comp = app.add_subcommand("complete", "Estimate factors from observations");
    comp->add_option("--obs", obs_path, "Observations file")->required();
    comp->add_option("--rank", rank, "CP rank")->required();
    comp->add_option("--seed", seed, "Initialization seed");
    comp->add_option("--eta", eta, "Step size override");
    comp->add_option("--t0", t0, "Iteration count override");
    comp->add_option("--restarts", restarts, "Restart count override");
    comp->add_option("--eps-th", eps_th, "Pruning threshold override");
    comp->add_option("--out-dir", out_dir, "Output directory");

    auto* uq = app.add_subcommand("uq", "Confidence intervals from observations and factors");
    uq->add_option("--obs", obs_path, "Observations file")->required();
    uq->add_option("--factors", factors_path, "Estimated factors file")->required();
    uq->add_option("--alpha", alpha, "Miss level in (0,1)");
    uq->add_option("--entry", entries, "Tensor entry target 'i,j,k' (repeatable)");
    uq->add_flag("--all-entries", all_entries, "CIs for every canonical entry");
    uq->add_option("--out-dir", out_dir, "Output directory");

    auto* exp = app.add_subcommand("experiment", "Monte-Carlo coverage and risk experiment");
    exp->add_option("--config", config_path,
                    "JSON config {d,r,p,sigma,beta,alpha,trials,master_seed,...}")
        ->required();
    exp->add_option("--jobs", jobs, "Worker count (default: TENSORCIQ_JOBS or hardware)");
    exp->add_flag("--all-entries", all_entries, "Track every canonical entry");
    exp->add_option("--out-dir", out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (sim->parsed()) return cmd_simulate(config_path, out_dir);
        if (comp->parsed())
            return cmd_complete(obs_path, rank, seed, eta, t0, restarts, eps_th, out_dir);
        if (uq->parsed())
            return cmd_uq(obs_path, factors_path, alpha, entries, all_entries, out_dir);
        if (exp->parsed()) return cmd_experiment(config_path, jobs, all_entries, out_dir);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const InitExhausted& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAlgorithm;
    } catch (const NonFiniteError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAlgorithm;
    } catch (const SingularGram& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAlgorithm;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;
}
