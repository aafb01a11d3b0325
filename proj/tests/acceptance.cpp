// Acceptance gate: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "autoens/autoens.hpp"
#include "test_util.hpp"

using namespace autoens;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail) {
    std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Schedule -------------------------------------------------------------------

void schedule_exactness() {
    const auto start = Clock::now();
    const double a1 = 0.5, a2 = 0.01;
    const std::int64_t N = 25, m = 5;
    const double beta = (a1 - a2) / N;
    const double beta1 = (a1 - a2) / (5.0 * N);
    const double beta2 = (a1 - a2) / (25.0 * N);
    ScheduleConfig c;

    // Scripted events: converge 12 steps into each floor, end each exploration after 30 rise steps.
    ScheduleState s = initial_state(c);
    AeEvents ev;
    std::size_t mismatches = 0, checked = 0;
    std::int64_t segment_k = 0;
    double anchor = a1;
    double lr_now = 0.0;
    bool saw_n = false, saw_m = false;
    std::string first_bad;
    for (std::int64_t i = 0; i < 500; ++i) {
        const Phase prev = s.phase;
        const auto st = ae_step(s, c, ev);
        const Phase ph = st.state.phase;
        const bool entered_decline = ph == Phase::Decline && prev != Phase::Decline;
        const bool entered_rise = ph == Phase::RiseRapid && prev != Phase::RiseRapid;
        if (entered_decline) {
            segment_k = 0;
            anchor = prev == Phase::Pretrain ? a1 : std::min(s.current_lr, a1);
        }
        if (entered_rise) segment_k = 0;

        double expected = 0.0;
        if (ph == Phase::Decline || ph == Phase::Floor) {
            if (anchor == a1) {
                expected = segment_k >= N ? a2 : a1 - beta * static_cast<double>(segment_k);
            } else {
                expected = segment_k >= N ? a2 : std::max(anchor - beta * static_cast<double>(segment_k), a2);
            }
            if (segment_k == N) saw_n = true;
        } else {
            if (segment_k < m) {
                expected = beta1 * static_cast<double>(segment_k) + a2;
            } else {
                if (segment_k == m) {
                    lr_now = beta1 * static_cast<double>(m) + a2;
                    saw_m = true;
                }
                expected = beta2 * static_cast<double>(segment_k - m) + lr_now;
            }
        }
        ++checked;
        if (st.lr != expected) {
            if (first_bad.empty()) first_bad = fmt(" first at n=%lld (%.17g vs %.17g)", static_cast<long long>(i), st.lr, expected);
            ++mismatches;
        }
        s = st.state;
        ++segment_k;
        ev = {};
        if (ph == Phase::Floor && segment_k == N + 12) ev.converged = true;
        if (ph == Phase::RiseExplore && segment_k == 30) ev.cycle_end = true;
    }
    // Continuity: the two decline clauses agree at k = N to within rounding,
    // and the rise clauses agree exactly at k = m.
    const double decline_gap = std::abs((a1 - beta * N) - a2);
    const bool continuous_n = decline_gap <= 4.0 * std::numeric_limits<double>::epsilon() && decline_lr(c, N) == a2;
    const bool continuous_m = rise_lr(c, m) == beta1 * m + a2;
    const double elapsed = seconds_since(start);
    report(mismatches == 0 && saw_n && saw_m && continuous_n && continuous_m && elapsed < 1.0, "schedule_exactness",
           fmt("%zu/%zu steps bit-exact%s, continuity k=N %s (gap %.3g), k=m %s, %.3f s (limit 1 s)", checked - mismatches, checked,
               first_bad.c_str(), continuous_n ? "ok" : "broken", decline_gap, continuous_m ? "ok" : "broken", elapsed));
}

// Diversity gate ---------------------------------------------------------------

ExperimentConfig moons_config(std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    return cfg;
}

void diversity_gate() {
    const auto start = Clock::now();
    std::size_t ends = 0, later_ends = 0, violations = 0, runs = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto cfg = moons_config(seed);
        const auto data = make_splits(cfg).splits();
        const auto run = run_auto_ensemble(cfg.ae, data, seed);
        ++runs;
        bool first = true;
        for (const auto& r : run.log) {
            if (r.event != "cycle_end") continue;
            ++ends;
            if (!first) {
                ++later_ends;
                if (!(r.d1 && r.d2 && *r.d2 > cfg.ae.alpha_ratio * *r.d1)) ++violations;
            }
            first = false;
        }
    }
    report(violations == 0 && later_ends > 0, "diversity_gate",
           fmt("%zu runs, %zu cycle ends (%zu from second cycle on), %zu violations of d2 > 1.5*d1, %.1f s", runs, ends, later_ends,
               violations, seconds_since(start)));
}

// Gradient oracle ------------------------------------------------------------

void gradient_oracle() {
    const auto start = Clock::now();
    double worst = 0.0;
    std::size_t pairs = 0;
    for (std::uint64_t seed = 0; seed < 24; ++seed) {
        const auto dims = seed % 2 == 0 ? std::vector<std::size_t>{2, 8, 2} : std::vector<std::size_t>{2, 32, 32, 3};
        const auto p = init_model(dims, 500 + seed);
        const auto b = autoens::testing::random_batch(16, 2, dims.back(), 900 + seed);
        worst = std::max(worst, autoens::testing::max_rel_error(loss_and_grad(p, b).grad, finite_diff_grad(p, b, 1e-6)));
        ++pairs;
    }
    const double elapsed = seconds_since(start);
    report(worst < 1e-4 && elapsed < 30.0, "gradient_oracle",
           fmt("%zu (net, batch) pairs on [2,8,2] and [2,32,32,3], eps 1e-6, max rel error %.3g (limit 1e-4), %.1f s (limit 30 s)",
               pairs, worst, elapsed));
}

// Ensemble sweeps --------------------------------------------------------------

struct SeedResult {
    MethodOutcome weighted;
    EnsembleEvaluation simple;
    double uniform_val_loss;
    double trained_val_loss;
    DataSplits data;
};

SeedResult run_seed(const ExperimentConfig& cfg) {
    SeedResult out;
    out.data = make_splits(cfg).splits();
    out.weighted = run_method(cfg, Method::Ae, out.data);
    out.simple = evaluate_ensemble(make_ensemble(out.weighted.ensemble.members, EnsembleMode::Simple), out.data.test);
    out.uniform_val_loss = out.weighted.combiner->initial_loss;
    out.trained_val_loss = out.weighted.combiner->final_loss;
    return out;
}

struct SweepSummary {
    std::size_t ge_mean = 0;
    std::size_t ge_best = 0;
    std::size_t seeds = 0;
    std::string detail;
};

SweepSummary summarize_improvement(const std::vector<SeedResult>& results) {
    SweepSummary s;
    for (const auto& r : results) {
        const auto& ev = r.weighted.eval;
        ++s.seeds;
        if (ev.ensemble.accuracy >= ev.mean_member_accuracy) ++s.ge_mean;
        if (ev.ensemble.accuracy >= ev.best_member_accuracy - 0.005) ++s.ge_best;
        s.detail += fmt(" [T=%zu ens %.4f mean %.4f best %.4f]", r.weighted.ensemble.size(), ev.ensemble.accuracy,
                        ev.mean_member_accuracy, ev.best_member_accuracy);
    }
    return s;
}

ExperimentConfig spirals_config(std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.data.kind = "spirals";
    cfg.data.n = 3000;
    cfg.data.classes = 3;
    cfg.data.noise = 0.2;
    cfg.ae.layer_dims = {2, 64, 64, 3};
    return cfg;
}

void ensemble_criteria() {
    const auto start = Clock::now();
    std::vector<SeedResult> moons, spirals;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) moons.push_back(run_seed(moons_config(seed)));
    for (std::uint64_t seed = 1; seed <= 10; ++seed) spirals.push_back(run_seed(spirals_config(seed)));
    const double sweep_seconds = seconds_since(start);

    const auto m = summarize_improvement(moons);
    const auto sp = summarize_improvement(spirals);
    const bool improvement_ok = m.ge_mean >= 9 && sp.ge_mean >= 9 && m.ge_best == m.seeds && sp.ge_best == sp.seeds && sweep_seconds < 600.0;
    report(improvement_ok, "ensemble_improvement",
           fmt("two-moons: ens >= mean member in %zu/10 (need 9), >= best - 0.5pp in %zu/10 (need 10); spirals: %zu/10, %zu/10; "
               "sweep %.1f s (limit 600 s)",
               m.ge_mean, m.ge_best, sp.ge_mean, sp.ge_best, sweep_seconds) +
               "\n    two-moons" + m.detail + "\n    spirals" + sp.detail);

    std::size_t loss_ok = 0, acc_ok = 0;
    std::string detail;
    for (const auto& r : moons) {
        if (r.trained_val_loss <= r.uniform_val_loss) ++loss_ok;
        const double w = r.weighted.eval.ensemble.accuracy;
        const double s = r.simple.ensemble.accuracy;
        if (w >= s - 0.005) ++acc_ok;
        detail += fmt(" [%.4f vs %.4f]", w, s);
    }
    report(loss_ok == 10 && acc_ok >= 8, "weighted_vs_simple",
           fmt("trained val loss <= uniform in %zu/10 (need 10); weighted test acc >= simple - 0.5pp in %zu/10 (need 8);", loss_ok,
               acc_ok) +
               detail);

    // Diversity ordering against CE checkpoints from the same step budget.
    std::size_t wins = 0;
    std::string corr_detail;
    for (std::size_t i = 0; i < moons.size(); ++i) {
        const auto& r = moons[i];
        const auto cfg = moons_config(i + 1);
        const auto& members = r.weighted.ensemble.members;
        std::vector<ModelParams> ae_params;
        for (const auto& mem : members) ae_params.push_back(mem.params);
        BaselineConfig ce_cfg = cfg.baselines;
        ce_cfg.epochs = r.weighted.run.steps_trained;
        const auto ce = run_baseline(Method::Ce, cfg.ae.layer_dims, ce_cfg, cfg.ae.train, r.data, *cfg.seed);
        const std::size_t t = std::max<std::size_t>(2, members.size());
        std::vector<ModelParams> ce_params;
        for (std::size_t j = ce.checkpoints.size() - t; j < ce.checkpoints.size(); ++j) ce_params.push_back(ce.checkpoints[j].params);
        if (ae_params.size() < 2) {
            corr_detail += " [ae has 1 member]";
            continue;
        }
        const double ae_corr = pairwise_output_correlation(ae_params, r.data.test.inputs).mean_off_diagonal();
        const double ce_corr = pairwise_output_correlation(ce_params, r.data.test.inputs).mean_off_diagonal();
        if (ae_corr < ce_corr) ++wins;
        corr_detail += fmt(" [ae %.6f ce %.6f]", ae_corr, ce_corr);
    }
    report(wins >= 8, "diversity_ordering", fmt("AE member correlation below CE adjacent-epoch correlation in %zu/10 (need 8);", wins) + corr_detail);
}

// Normalization ----------------------------------------------------------------

void normalization_endpoints() {
    std::size_t bad = 0, total = 0;
    Rng rng(31);
    std::vector<std::pair<double, double>> ranges = {{0.0, 1.0}, {0.0, 10.0}, {0.3, 0.7}};
    for (int i = 0; i < 100; ++i) {
        const double lo = rng.uniform(0.0, 50.0);
        ranges.emplace_back(lo, lo + rng.uniform(1e-3, 100.0));
    }
    for (const auto& [lo, hi] : ranges) {
        const NormalizationMap map{lo, hi, 0.9, 1.0};
        ++total;
        if (normalize_distance(map, lo).y != 1.0 || normalize_distance(map, hi).y != 0.9) ++bad;
    }
    report(bad == 0, "normalization_endpoints", fmt("%zu/%zu maps send x_min -> 1.0 and x_max -> 0.9 exactly", total - bad, total));
}

// Determinism and persistence --------------------------------------------------------

void determinism_and_persistence() {
    const auto cfg = moons_config(42);
    const auto data = make_splits(cfg).splits();
    const auto dir = std::filesystem::temp_directory_path() / "autoens_acceptance";
    std::filesystem::remove_all(dir);
    save_run(run_auto_ensemble(cfg.ae, data, 42), dir / "a");
    save_run(run_auto_ensemble(cfg.ae, make_splits(cfg).splits(), 42), dir / "b");
    const bool logs_equal = read_text_file(dir / "a" / "metrics.jsonl") == read_text_file(dir / "b" / "metrics.jsonl");
    bool ckpt_equal = true;
    for (const auto& e : std::filesystem::directory_iterator(dir / "a" / "checkpoints")) {
        ckpt_equal = ckpt_equal && read_text_file(e.path()) == read_text_file(dir / "b" / "checkpoints" / e.path().filename());
    }

    std::size_t round_trips = 0;
    Rng rng(77);
    for (std::uint64_t i = 0; i < 100; ++i) {
        std::vector<std::size_t> dims = {1 + rng.below(8), 1 + rng.below(32), 1 + rng.below(32), 2 + rng.below(4)};
        auto p = init_model(dims, rng.next_u64());
        for (auto& layer : p.layers) {
            for (double& b : layer.biases) b = rng.normal();
        }
        const Metrics val{rng.uniform() * 3, rng.uniform(), rng.below(1000), 1000};
        const Metrics train{rng.uniform() * 3, rng.uniform(), rng.below(5000), 5000};
        const auto rec = make_checkpoint(i, p, static_cast<std::int64_t>(rng.below(1u << 30)), val, train);
        const auto path = dir / "rt.aeck";
        save_checkpoint(rec, path);
        if (load_checkpoint(path) == rec) ++round_trips;
    }
    std::filesystem::remove_all(dir);
    report(logs_equal && ckpt_equal && round_trips == 100, "determinism_and_persistence",
           fmt("metrics logs byte-identical: %s, checkpoint files byte-identical: %s, %zu/100 random checkpoint round-trips bit-exact",
               logs_equal ? "yes" : "no", ckpt_equal ? "yes" : "no", round_trips));
}

// LR range scan ------------------------------------------------------------------

void lr_range() {
    const auto cfg = moons_config(5);
    const auto data = make_splits(cfg).splits();
    ScanOptions opts;
    opts.shuffle_seed = derive_seed(5, 1);
    const auto curve = lr_range_scan(init_model(cfg.ae.layer_dims, 5), data.train, cfg.scan.lo, cfg.scan.hi, cfg.scan.steps, opts);
    try {
        const auto b = suggest_bounds(curve);
        const bool nonempty = b.alpha2.lo < b.alpha2.hi && b.alpha1.lo < b.alpha1.hi;
        const bool ordered = b.alpha2.hi <= b.alpha1.lo;
        const bool in_range = b.alpha2.lo >= 1e-4 && b.alpha2.hi <= 1e-1;
        report(nonempty && ordered && in_range, "lr_range_scan",
               fmt("%zu points, alpha2 in [%.4g, %.4g], alpha1 in [%.4g, %.4g]; nonempty %s, alpha2 below alpha1 %s, alpha2 within "
                   "[1e-4, 1e-1] %s",
                   curve.points.size(), b.alpha2.lo, b.alpha2.hi, b.alpha1.lo, b.alpha1.hi, nonempty ? "yes" : "no",
                   ordered ? "yes" : "no", in_range ? "yes" : "no"));
    } catch (const Error& e) {
        report(false, "lr_range_scan", std::string("suggest_bounds failed: ") + e.what());
    }
}

}  // namespace

int main() {
    schedule_exactness();
    normalization_endpoints();
    gradient_oracle();
    determinism_and_persistence();
    lr_range();
    diversity_gate();
    ensemble_criteria();
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
