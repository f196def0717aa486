#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "relcl/metrics.hpp"

using namespace relcl;

namespace {

PredictionRow row(const char* key, int gold, int pred) {
    return {"doc", std::string(key) + "_h", std::string(key) + "_t", pred, gold};
}

// ---- brute-force references, written as direct precision/recall loops ----

double oracle_micro(const PredictionSet& ps, const std::set<Triple>& seen) {
    size_t pred_total = 0, gold_total = 0, correct = 0;
    for (const auto& r : ps.rows) {
        const bool pred_counts =
            r.pred != ps.no_relation && !seen.count({r.head, r.pred, r.tail});
        const bool gold_counts =
            r.gold != ps.no_relation && !seen.count({r.head, r.gold, r.tail});
        if (pred_counts) ++pred_total;
        if (gold_counts) ++gold_total;
        if (pred_counts && gold_counts && r.pred == r.gold) ++correct;
    }
    if (pred_total == 0 || gold_total == 0) return 0.0;
    const double p = static_cast<double>(correct) / static_cast<double>(pred_total);
    const double rc = static_cast<double>(correct) / static_cast<double>(gold_total);
    if (p + rc == 0.0) return 0.0;
    return 2.0 * p * rc / (p + rc);
}

double oracle_macro(const PredictionSet& ps, bool weighted) {
    std::set<int> classes;
    for (const auto& r : ps.rows)
        if (r.gold != ps.no_relation) classes.insert(r.gold);
    double sum = 0.0, wsum = 0.0, wtotal = 0.0;
    for (int c : classes) {
        size_t pred_c = 0, gold_c = 0, correct_c = 0;
        for (const auto& r : ps.rows) {
            if (r.pred == c) ++pred_c;
            if (r.gold == c) ++gold_c;
            if (r.pred == c && r.gold == c) ++correct_c;
        }
        double f1 = 0.0;
        if (pred_c > 0 && gold_c > 0 && correct_c > 0) {
            const double p = static_cast<double>(correct_c) / static_cast<double>(pred_c);
            const double rc = static_cast<double>(correct_c) / static_cast<double>(gold_c);
            f1 = 2.0 * p * rc / (p + rc);
        }
        sum += f1;
        wsum += static_cast<double>(gold_c) * f1;
        wtotal += static_cast<double>(gold_c);
    }
    if (classes.empty()) return 0.0;
    return weighted ? (wtotal > 0 ? wsum / wtotal : 0.0)
                    : sum / static_cast<double>(classes.size());
}

double oracle_jaccard(const LearningOrderPartition& a, const LearningOrderPartition& b,
                      JsiMode mode) {
    double total = 0.0;
    for (size_t i = 0; i < a.epochs(); ++i) {
        size_t inter = 0;
        for (const auto& id : a.learned[i]) inter += b.learned[i].count(id);
        std::set<std::string> uni = a.learned[i];
        uni.insert(b.learned[i].begin(), b.learned[i].end());
        total += uni.empty() ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni.size());
    }
    return mode == JsiMode::sum ? total : total / static_cast<double>(a.epochs());
}

} // namespace

TEST_CASE("f1_micro worked example: TP=1 FP=2 FN=2 gives 1/3") {
    PredictionSet ps;
    ps.no_relation = 99;
    ps.rows = {row("a", 1, 1), row("b", 2, 1), row("c", 1, 99), row("d", 99, 2)};
    CHECK(f1_micro(ps) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    SUBCASE("perfect predictions give 1") {
        for (auto& r : ps.rows) r.pred = r.gold;
        CHECK(f1_micro(ps) == 1.0);
    }
    SUBCASE("all no-relation predictions on nonempty gold give 0") {
        for (auto& r : ps.rows) r.pred = 99;
        CHECK(f1_micro(ps) == 0.0);
    }
    SUBCASE("empty set rejected") {
        ps.rows.clear();
        CHECK_THROWS_AS(f1_micro(ps), std::invalid_argument);
    }
}

TEST_CASE("f1_macro worked examples") {
    PredictionSet ps;
    ps.no_relation = 99;
    SUBCASE("equal support, F1 {1, 0}: macro = weighted = 0.5") {
        ps.rows = {row("a", 1, 1), row("b", 1, 1), row("c", 2, 99), row("d", 2, 99)};
        CHECK(f1_macro(ps, false) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(f1_macro(ps, true) == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("9:1 support with F1 {1, 0}: weighted = 0.9") {
        for (int i = 0; i < 9; ++i) ps.rows.push_back(row(("r" + std::to_string(i)).c_str(), 1, 1));
        ps.rows.push_back(row("z", 2, 99));
        CHECK(f1_macro(ps, true) == doctest::Approx(0.9).epsilon(1e-15));
        CHECK(f1_macro(ps, false) == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("single class: macro == weighted == class F1") {
        ps.rows = {row("a", 1, 1), row("b", 1, 99)};
        const double f1 = f1_macro(ps, false);
        CHECK(f1 == f1_macro(ps, true));
        CHECK(f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12)); // P=1, R=0.5
    }
}

TEST_CASE("ig_f1 removes seen triples per side") {
    PredictionSet ps;
    ps.no_relation = 99;
    ps.rows = {row("a", 1, 1), row("b", 2, 1), row("c", 1, 99), row("d", 99, 2)};

    SUBCASE("empty seen index: ig_f1 equals f1_micro") {
        CHECK(ig_f1(ps).value == f1_micro(ps));
        CHECK_FALSE(ig_f1(ps).empty_pool);
    }
    SUBCASE("the a-triple seen: no true positives remain, F1 = 0") {
        ps.seen.insert({"a_h", 1, "a_t"});
        const auto res = ig_f1(ps);
        CHECK(res.value == 0.0);
        CHECK_FALSE(res.empty_pool);
    }
    SUBCASE("everything seen: degenerate pool flagged") {
        for (const auto& r : ps.rows) {
            ps.seen.insert({r.head, r.gold, r.tail});
            ps.seen.insert({r.head, r.pred, r.tail});
        }
        const auto res = ig_f1(ps);
        CHECK(res.value == 0.0);
        CHECK(res.empty_pool);
    }
}

TEST_CASE("metrics match brute-force references exactly on random inputs") {
    Rng rng(123);
    for (int trial = 0; trial < 120; ++trial) {
        PredictionSet ps;
        const int classes = 3 + static_cast<int>(rng.uniform_int(4));
        ps.no_relation = classes;
        const size_t n = 1 + rng.uniform_int(30);
        for (size_t i = 0; i < n; ++i) {
            PredictionRow r;
            r.doc_id = "d";
            r.head = "h" + std::to_string(rng.uniform_int(6));
            r.tail = "t" + std::to_string(rng.uniform_int(6));
            r.gold = static_cast<int>(rng.uniform_int(classes + 1));
            r.pred = static_cast<int>(rng.uniform_int(classes + 1));
            ps.rows.push_back(std::move(r));
        }
        // Random seen triples: some real, some irrelevant.
        for (const auto& r : ps.rows) {
            if (rng.uniform() < 0.25) ps.seen.insert({r.head, r.gold, r.tail});
            if (rng.uniform() < 0.15) ps.seen.insert({r.head, r.pred, r.tail});
        }
        if (rng.uniform() < 0.3)
            ps.seen.insert({"hx", static_cast<int>(rng.uniform_int(classes)), "tx"});

        CHECK(f1_micro(ps) == oracle_micro(ps, {}));
        CHECK(ig_f1(ps).value == oracle_micro(ps, ps.seen));
        CHECK(f1_macro(ps, false) == oracle_macro(ps, false));
        CHECK(f1_macro(ps, true) == oracle_macro(ps, true));
    }
}

TEST_CASE("jaccard_cumulative hand values and random agreement with the oracle") {
    LearningOrderPartition a, b;
    a.learned = {{"1", "2", "3"}};
    b.learned = {{"2", "3", "4"}};
    CHECK(jaccard_cumulative(a, b, JsiMode::mean) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(jaccard_cumulative(a, b, JsiMode::sum) == doctest::Approx(0.5).epsilon(1e-15));

    LearningOrderPartition c;
    c.learned.resize(15);
    for (size_t i = 0; i < 15; ++i)
        for (size_t j = 0; j <= i; ++j) c.learned[i].insert("x" + std::to_string(i * 40 + j));
    CHECK(jaccard_cumulative(c, c, JsiMode::mean) == 1.0);
    CHECK(jaccard_cumulative(c, c, JsiMode::sum) == 15.0);

    LearningOrderPartition d;
    d.learned.resize(3);
    CHECK_THROWS_AS(jaccard_cumulative(c, d, JsiMode::mean), std::invalid_argument);

    Rng rng(55);
    for (int trial = 0; trial < 40; ++trial) {
        LearningOrderPartition r, s;
        const size_t k = 1 + rng.uniform_int(6);
        r.learned.resize(k);
        s.learned.resize(k);
        for (size_t i = 0; i < k; ++i) {
            const size_t nr = rng.uniform_int(6);
            const size_t ns = rng.uniform_int(6);
            for (size_t j = 0; j < nr; ++j) r.learned[i].insert("i" + std::to_string(rng.uniform_int(12)));
            for (size_t j = 0; j < ns; ++j) s.learned[i].insert("i" + std::to_string(rng.uniform_int(12)));
        }
        CHECK(jaccard_cumulative(r, s, JsiMode::mean) == oracle_jaccard(r, s, JsiMode::mean));
        CHECK(jaccard_cumulative(r, s, JsiMode::sum) == oracle_jaccard(r, s, JsiMode::sum));
    }
}

TEST_CASE("accuracy_by_epoch reads provenance and pools ranges") {
    Dataset ds;
    for (int i = 0; i < 6; ++i) {
        Document d;
        d.doc_id = "d" + std::to_string(i);
        d.tokens = {10, 11};
        d.entities = {{"a", {{0, 0}}}, {"b", {{1, 1}}}};
        RelationInstance inst;
        inst.head = "a";
        inst.tail = "b";
        inst.silver_label = 0;
        inst.gold_correct = (i % 2 == 0);
        d.instances.push_back(inst);
        ds.docs.push_back(std::move(d));
    }
    LearningOrderPartition part;
    part.learned.resize(2);
    part.learned[0] = {"d0:0", "d1:0"};       // one correct, one not
    part.learned[1] = {"d2:0", "d4:0"};       // both correct
    part.not_learned = {"d3:0", "d5:0"};      // both incorrect

    EpochAccuracy acc = accuracy_by_epoch(part, ds);
    CHECK(acc.learned_accuracy[0] == 0.5);
    CHECK(acc.learned_accuracy[1] == 1.0);
    CHECK(acc.not_learned_accuracy == 0.0);
    CHECK(acc.pooled(0, 1) == doctest::Approx(0.75));

    SUBCASE("all-correct corpus gives accuracy 1 everywhere") {
        for (auto& d : ds.docs) d.instances[0].gold_correct = true;
        EpochAccuracy all = accuracy_by_epoch(part, ds);
        CHECK(all.learned_accuracy[0] == 1.0);
        CHECK(all.learned_accuracy[1] == 1.0);
        CHECK(all.not_learned_accuracy == 1.0);
    }
    SUBCASE("missing provenance is a domain error") {
        ds.docs[0].instances[0].gold_correct.reset();
        CHECK_THROWS_AS(accuracy_by_epoch(part, ds), std::domain_error);
    }
}

TEST_CASE("difficult_classes thresholds") {
    PredictionSet ps;
    ps.no_relation = 9;
    // class 0: 4/4 correct; class 1: 1/2; class 2: 2/3
    for (int i = 0; i < 4; ++i) ps.rows.push_back(row(("a" + std::to_string(i)).c_str(), 0, 0));
    ps.rows.push_back(row("b0", 1, 1));
    ps.rows.push_back(row("b1", 1, 0));
    ps.rows.push_back(row("c0", 2, 2));
    ps.rows.push_back(row("c1", 2, 2));
    ps.rows.push_back(row("c2", 2, 9));

    DifficultClasses d8 = difficult_classes(ps, 0.8);
    CHECK(d8.classes == std::set<int>{1, 2});
    CHECK(d8.accuracy[0] == 1.0);
    CHECK(d8.accuracy[1] == 0.5);
    CHECK(d8.sliced_f1 > 0.0);

    CHECK(difficult_classes(ps, 0.0).classes.empty());
    CHECK(difficult_classes(ps, 1.0).classes == std::set<int>{1, 2}); // all imperfect
}

TEST_CASE("spearman correlation and permutation p-value") {
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {40, 30, 20, 10}) == doctest::Approx(-1.0));
    CHECK(std::fabs(spearman({1, 1, 2, 2}, {1, 2, 1, 2})) < 1e-12); // ties, no relation

    Rng rng(10);
    std::vector<double> x, y_corr, y_rand;
    for (int i = 0; i < 100; ++i) {
        const double v = rng.normal();
        x.push_back(v);
        y_corr.push_back(v + 0.3 * rng.normal());
        y_rand.push_back(rng.normal());
    }
    CHECK(spearman(x, y_corr) > 0.5);
    CHECK(spearman_pvalue_positive(x, y_corr, 500, 1) < 0.05);
    CHECK(spearman_pvalue_positive(x, y_rand, 500, 1) > 0.05);
}

TEST_CASE("prediction rows and reports round-trip through files") {
    std::vector<PredictionRow> rows = {row("a", 1, 2), row("b", 3, 3)};
    const auto dir = std::filesystem::temp_directory_path();
    const std::string ppath = (dir / "relcl_preds.jsonl").string();
    save_predictions(rows, ppath);
    CHECK(load_predictions(ppath) == rows);
    std::remove(ppath.c_str());

    PredictionSet ps;
    ps.no_relation = 9;
    ps.rows = {row("a", 1, 1), row("b", 2, 1)};
    MetricsReport rep = compute_report(ps);
    const std::string rpath = (dir / "relcl_report.csv").string();
    write_report_csv(rep, rpath);
    std::ifstream in(rpath);
    std::string line;
    std::getline(in, line);
    CHECK(line == "metric,value");
    std::getline(in, line);
    CHECK(line.find("f1_micro,") == 0);
    std::remove(rpath.c_str());
}
