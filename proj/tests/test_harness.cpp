#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>

#include "test_util.hpp"

using namespace autoens;

namespace {

ExperimentConfig quick_config(std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.data.n = 300;
    cfg.ae.layer_dims = {2, 8, 2};
    cfg.ae.schedule.N = 10;
    cfg.ae.stop.max_checkpoints = 3;
    cfg.ae.stop.max_steps = 300;
    cfg.baselines.epochs = 6;
    cfg.baselines.sse_cycle_len = 2;
    cfg.baselines.sse_cycles = 6;
    cfg.baselines.fge_pretrain_epochs = 2;
    cfg.baselines.fge_cycles = 2;
    cfg.baselines.rie_members = 2;
    cfg.baselines.ce_top_k = 3;
    return cfg;
}

std::size_t count_label(const std::vector<std::size_t>& labels, std::size_t c) {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), c));
}

}  // namespace

TEST(Data, TwoMoonsShapeAndBalance) {
    const auto d = gen_two_moons(101, 0.1, 3);
    EXPECT_EQ(d.size(), 101u);
    EXPECT_EQ(d.inputs.cols, 2u);
    EXPECT_EQ(d.num_classes(), 2u);
    EXPECT_EQ(count_label(d.labels, 0), 50u);
    EXPECT_EQ(count_label(d.labels, 1), 51u);
    EXPECT_EQ(d.provenance.kind, "two_moons");
    EXPECT_EQ(gen_two_moons(101, 0.1, 3).inputs, d.inputs);
    EXPECT_NE(gen_two_moons(101, 0.1, 4).inputs, d.inputs);
}

TEST(Data, NoiselessMoonsLieOnArcs) {
    const auto d = gen_two_moons(50, 0.0, 1);
    for (std::size_t i = 0; i < d.size(); ++i) {
        double x = d.inputs(i, 0), y = d.inputs(i, 1);
        if (d.labels[i] == 1) {
            x = 1.0 - x;
            y = 0.5 - y;
        }
        EXPECT_NEAR(x * x + y * y, 1.0, 1e-12);
    }
}

TEST(Data, BlobsAndSpirals) {
    const auto b = gen_blobs(90, 3, 0.5, 2);
    EXPECT_EQ(b.num_classes(), 3u);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(count_label(b.labels, c), 30u);
    const auto s = gen_spirals(100, 3, 0.2, 2);
    EXPECT_EQ(s.num_classes(), 3u);
    EXPECT_EQ(count_label(s.labels, 0), 34u);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_LE(std::hypot(s.inputs(i, 0), s.inputs(i, 1)), 1.0 + 1e-12);
    EXPECT_THROW(gen_blobs(90, 1, 0.5, 2), Error);
    EXPECT_THROW(gen_two_moons(5, 0.1, 2), Error);
}

TEST(Data, CsvParsing) {
    const auto d = parse_csv("a,label,b\n1,cat,2\n3,dog,4\n5.5,cat,-6\n", "label");
    EXPECT_EQ(d.size(), 3u);
    EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(d.class_names, (std::vector<std::string>{"cat", "dog"}));
    EXPECT_EQ(d.labels, (std::vector<std::size_t>{0, 1, 0}));
    EXPECT_EQ(d.inputs.data, (std::vector<double>{1, 2, 3, 4, 5.5, -6}));
    EXPECT_EQ(d.provenance.content_hash.size(), 16u);
}

TEST(Data, CsvErrorsNameRowAndColumn) {
    try {
        parse_csv("a,label\n1,x\nfoo,y\n", "label", "f.csv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Parse);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("'a'"), std::string::npos) << msg;
    }
    EXPECT_THROW(parse_csv("a,b\n1,2\n", "label"), Error);
    EXPECT_THROW(parse_csv("a,label\n1\n", "label"), Error);
    EXPECT_THROW(parse_csv("", "label"), Error);
}

TEST(Data, ContentHashKnownValues) {
    EXPECT_EQ(content_hash(""), "cbf29ce484222325");
    EXPECT_EQ(content_hash("a"), "af63dc4c8601ec8c");
}

TEST(Data, StratifiedSplit) {
    Dataset d = gen_blobs(100, 2, 1.0, 5);
    const auto s = split(d, {0.6, 0.2, 0.2}, 9);
    EXPECT_EQ(s.train.size(), 60u);
    EXPECT_EQ(s.val.size(), 20u);
    EXPECT_EQ(s.test.size(), 20u);
    EXPECT_EQ(count_label(s.val.labels, 0), 10u);
    std::set<std::size_t> all;
    for (auto* rows : {&s.train_rows, &s.val_rows, &s.test_rows}) all.insert(rows->begin(), rows->end());
    EXPECT_EQ(all.size(), 100u);
    // train features are standardized
    for (std::size_t j = 0; j < 2; ++j) {
        double m = 0.0, v = 0.0;
        for (std::size_t i = 0; i < s.train.size(); ++i) m += s.train.inputs(i, j);
        m /= 60.0;
        for (std::size_t i = 0; i < s.train.size(); ++i) v += (s.train.inputs(i, j) - m) * (s.train.inputs(i, j) - m);
        EXPECT_NEAR(m, 0.0, 1e-12);
        EXPECT_NEAR(v / 60.0, 1.0, 1e-12);
    }
    EXPECT_EQ(split(d, {0.6, 0.2, 0.2}, 9).train_rows, s.train_rows);
}

TEST(Data, SplitNeedsThreePerClass) {
    Dataset d = gen_blobs(20, 2, 1.0, 5);
    d.labels[0] = 2;
    d.class_names.push_back("2");
    try {
        split(d, {}, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Stratification);
    }
    EXPECT_THROW(split(gen_blobs(20, 2, 1.0, 5), {0.5, 0.5, 0.5}, 1), Error);
}

TEST(Config, ParsesKeysAndComments) {
    const auto cfg = parse_config(
        "# comment\n"
        "seed = 17\n"
        "data.kind = spirals\n"
        "data.classes = 3\n"
        "model.layers = 2, 16, 3\n"
        "sched.alpha1 = 0.3\n"
        "sched.N = 40\n"
        "div.alpha = 1.8\n"
        "ens.mode = simple\n"
        "base.milestones = 0.4,0.8\n"
        "conv.accept_during_decline = true\n");
    EXPECT_EQ(cfg.seed, 17u);
    EXPECT_EQ(cfg.data.kind, "spirals");
    EXPECT_EQ(cfg.ae.layer_dims, (std::vector<std::size_t>{2, 16, 3}));
    EXPECT_EQ(cfg.ae.schedule.alpha1, 0.3);
    EXPECT_EQ(cfg.ae.schedule.N, 40);
    EXPECT_EQ(cfg.ae.alpha_ratio, 1.8);
    EXPECT_EQ(cfg.ae_mode, EnsembleMode::Simple);
    EXPECT_EQ(cfg.baselines.milestone_fractions, (std::vector<double>{0.4, 0.8}));
    EXPECT_TRUE(cfg.ae.convergence.accept_during_decline);
    EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, Errors) {
    auto expect_config_error = [](const std::string& text) {
        try {
            parse_config(text);
            FAIL() << text;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::Config) << text;
        }
    };
    expect_config_error("bogus.key = 1\n");
    expect_config_error("seed = abc\n");
    expect_config_error("just a line\n");
    expect_config_error("sched.N = 2.5\n");
    ExperimentConfig no_seed;
    EXPECT_THROW(no_seed.validate(), Error);
    auto bad = quick_config(1);
    bad.ae.schedule.alpha2 = 1.0;
    EXPECT_THROW(bad.validate(), Error);
}

TEST(Config, ModelWidthMustMatchData) {
    auto cfg = quick_config(1);
    cfg.ae.layer_dims = {2, 8, 3};
    EXPECT_THROW(make_splits(cfg), Error);
}

TEST(Experiment, RunMethodProducesEnsemble) {
    const auto cfg = quick_config(3);
    const auto data = make_splits(cfg).splits();
    const auto out = run_method(cfg, Method::Ae, data);
    EXPECT_EQ(out.method, "ae");
    EXPECT_EQ(out.ensemble.mode, EnsembleMode::Weighted);
    ASSERT_TRUE(out.combiner.has_value());
    EXPECT_LE(out.combiner->final_loss, out.combiner->initial_loss);
    EXPECT_EQ(out.ensemble.size(), out.run.checkpoints.size());
    const auto ce = run_method(cfg, Method::Ce, data);
    EXPECT_EQ(ce.ensemble.size(), 3u);
    EXPECT_EQ(ce.ensemble.mode, EnsembleMode::Simple);
}

TEST(Experiment, CompareIsDeterministicAndParallelSafe) {
    const auto cfg = quick_config(4);
    const std::vector<Method> methods = {Method::Ae, Method::Sse, Method::Fge, Method::Ce, Method::Rie, Method::Ind};
    const auto a = compare_methods(cfg, methods);
    const auto b = compare_methods(cfg, methods, true);
    ASSERT_TRUE(a.ok());
    ASSERT_EQ(a.rows.size(), methods.size());
    for (auto f : {ReportFormat::Csv, ReportFormat::Jsonl, ReportFormat::Markdown}) {
        EXPECT_EQ(format_table(a.rows, f), format_table(b.rows, f));
    }
    for (const auto& r : a.rows) EXPECT_DOUBLE_EQ(r.improvement, r.ensemble_acc - r.best_single_acc);
}

TEST(Experiment, FailingMethodBecomesErrorRow) {
    auto cfg = quick_config(5);
    cfg.ae.stop.max_steps = 2;
    const auto rep = compare_methods(cfg, {Method::Ae, Method::Ind});
    EXPECT_FALSE(rep.ok());
    EXPECT_FALSE(rep.rows[0].error.empty());
    EXPECT_TRUE(rep.rows[1].error.empty());
    EXPECT_NE(format_table(rep.rows, ReportFormat::Markdown).find("error:"), std::string::npos);
}

TEST(Experiment, EmitAndReloadReport) {
    const auto cfg = quick_config(6);
    const auto splits = make_splits(cfg);
    const auto rep = compare_methods(cfg, {Method::Ae, Method::Sse});
    const auto dir = std::filesystem::temp_directory_path() / "autoens_test_emit";
    std::filesystem::remove_all(dir);
    emit_report(rep, dir, ReportFormat::Csv, splits.test.batch());
    for (const char* f : {"ae/metrics.jsonl", "ae/lr_series.csv", "ae/ensemble.csv", "ae/summary.json", "sse/summary.json",
                          "comparison.csv"}) {
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    }
    const auto rows = rows_from_dir(dir);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].method, "ae");
    EXPECT_EQ(rows[0].ensemble_acc, rep.rows[0].ensemble_acc);
    EXPECT_EQ(rows[1].avg_steps_per_member, rep.rows[1].avg_steps_per_member);
}

TEST(Experiment, ReportFormatNames) {
    EXPECT_EQ(parse_report_format("csv"), ReportFormat::Csv);
    EXPECT_EQ(parse_report_format("md"), ReportFormat::Markdown);
    EXPECT_EQ(parse_report_format("markdown-table"), ReportFormat::Markdown);
    EXPECT_THROW(parse_report_format("xml"), Error);
    EXPECT_EQ(format_number(0.1), "0.1");
}

TEST(Data, NoiselessMoonsNeedHiddenLayers) {
    const auto d = gen_two_moons(200, 0.0, 1);
    const Batch all = d.batch();
    auto train = [&](std::vector<std::size_t> dims, int epochs, double lr) {
        auto p = init_model(dims, 2);
        Rng rng(3);
        Sgd opt;
        for (int e = 0; e < epochs; ++e) train_epoch(p, all, lr, 16, rng, opt);
        return evaluate(p, all).accuracy;
    };
    EXPECT_LT(train({2, 2}, 300, 0.1), 1.0);
    EXPECT_GE(train({2, 32, 32, 2}, 600, 0.1), 0.99);
}

TEST(Data, SplitKeepsClassProportions) {
    const Dataset d = gen_spirals(301, 3, 0.1, 4);
    const auto s = split(d, {}, 11);
    for (const auto* part : {&s.train, &s.val, &s.test}) {
        for (std::size_t c = 0; c < 3; ++c) {
            const double expected = static_cast<double>(part->size()) * static_cast<double>(count_label(d.labels, c)) / 301.0;
            EXPECT_LE(std::abs(static_cast<double>(count_label(part->labels, c)) - expected), 1.0 + 1e-9);
        }
    }
}

TEST(Experiment, MarkdownRowsAndSymmetricCorrelationCsv) {
    const auto cfg = quick_config(7);
    const auto rep = compare_methods(cfg, {Method::Ae, Method::Ind});
    const auto md = format_table(rep.rows, ReportFormat::Markdown);
    EXPECT_EQ(static_cast<std::size_t>(std::count(md.begin(), md.end(), '\n')), 2u + rep.rows.size());
    EXPECT_EQ(rep.rows[1].ensemble_size, 1u);
    EXPECT_EQ(rep.rows[1].improvement, 0.0);

    const auto splits = make_splits(cfg);
    const auto dir = std::filesystem::temp_directory_path() / "autoens_test_corr";
    std::filesystem::remove_all(dir);
    emit_method(*rep.outcomes[0], dir, splits.test.batch());
    const auto text = read_text_file(dir / "correlation.csv");
    std::vector<std::vector<std::string>> cells;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> row;
        std::istringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) row.push_back(cell);
        cells.push_back(row);
    }
    for (std::size_t i = 1; i < cells.size(); ++i) {
        for (std::size_t j = 1; j < cells.size(); ++j) EXPECT_EQ(cells[i][j], cells[j][i]);
    }

    const auto series = read_text_file(dir / "lr_series.csv");
    const auto lrs = replay_ae_lrs(rep.outcomes[0]->run.log, cfg.ae.schedule);
    std::istringstream ss(series);
    std::string line;
    std::getline(ss, line);
    for (double lr : lrs) {
        ASSERT_TRUE(std::getline(ss, line));
        EXPECT_EQ(std::stod(line.substr(line.rfind(',') + 1)), lr);
    }
}
