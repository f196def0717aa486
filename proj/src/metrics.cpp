#include "relcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include <json.hpp>

namespace relcl {

using json = nlohmann::json;

void save_predictions(const std::vector<PredictionRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_predictions: cannot open " + path);
    for (const auto& r : rows) {
        json j;
        j["doc_id"] = r.doc_id;
        j["head"] = r.head;
        j["tail"] = r.tail;
        j["pred"] = r.pred;
        j["gold"] = r.gold;
        out << j.dump() << "\n";
    }
}

std::vector<PredictionRow> load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_predictions: cannot open " + path);
    std::vector<PredictionRow> rows;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            rows.push_back({j.at("doc_id").get<std::string>(), j.at("head").get<std::string>(),
                            j.at("tail").get<std::string>(), j.at("pred").get<int>(),
                            j.at("gold").get<int>()});
        } catch (const json::exception& e) {
            throw std::runtime_error("load_predictions: line " + std::to_string(line_no) + ": " +
                                     e.what());
        }
    }
    return rows;
}

std::set<Triple> collect_triples(const Dataset& ds, int no_relation) {
    std::set<Triple> triples;
    for (const auto& d : ds.docs)
        for (const auto& inst : d.instances)
            if (inst.silver_label != no_relation)
                triples.insert({inst.head, inst.silver_label, inst.tail});
    return triples;
}

namespace {

// F1 = 2PR/(P+R); 0 whenever precision or recall is undefined or both zero.
double f1_from_counts(size_t tp, size_t fp, size_t fn) {
    if (tp + fp == 0 || tp + fn == 0) return 0.0;
    const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

} // namespace

double f1_micro(const PredictionSet& preds) {
    if (preds.rows.empty()) throw std::invalid_argument("f1_micro: empty prediction set");
    size_t tp = 0, fp = 0, fn = 0;
    for (const auto& r : preds.rows) {
        const bool pred_pos = r.pred != preds.no_relation;
        const bool gold_pos = r.gold != preds.no_relation;
        if (pred_pos && gold_pos && r.pred == r.gold) {
            ++tp;
        } else {
            if (pred_pos) ++fp;
            if (gold_pos) ++fn;
        }
    }
    return f1_from_counts(tp, fp, fn);
}

std::vector<PerClassStats> per_class_table(const PredictionSet& preds) {
    std::map<int, PerClassStats> by_class;
    std::map<int, size_t> tp, fp, fn;
    for (const auto& r : preds.rows) {
        if (r.gold != preds.no_relation) {
            by_class[r.gold].label = r.gold;
            ++by_class[r.gold].support;
        }
        if (r.pred == r.gold) {
            if (r.pred != preds.no_relation) ++tp[r.pred];
        } else {
            if (r.pred != preds.no_relation) ++fp[r.pred];
            if (r.gold != preds.no_relation) ++fn[r.gold];
        }
    }
    std::vector<PerClassStats> table;
    for (auto& [cls, stats] : by_class) {
        const size_t tpc = tp.count(cls) ? tp[cls] : 0;
        const size_t fpc = fp.count(cls) ? fp[cls] : 0;
        const size_t fnc = fn.count(cls) ? fn[cls] : 0;
        stats.precision = (tpc + fpc) ? static_cast<double>(tpc) / static_cast<double>(tpc + fpc) : 0.0;
        stats.recall = (tpc + fnc) ? static_cast<double>(tpc) / static_cast<double>(tpc + fnc) : 0.0;
        stats.f1 = f1_from_counts(tpc, fpc, fnc);
        table.push_back(stats);
    }
    return table;
}

double f1_macro(const PredictionSet& preds, bool weighted) {
    if (preds.rows.empty()) throw std::invalid_argument("f1_macro: empty prediction set");
    const auto table = per_class_table(preds);
    if (table.empty()) return 0.0;
    if (!weighted) {
        double sum = 0.0;
        for (const auto& s : table) sum += s.f1;
        return sum / static_cast<double>(table.size());
    }
    double sum = 0.0, total = 0.0;
    for (const auto& s : table) {
        sum += static_cast<double>(s.support) * s.f1;
        total += static_cast<double>(s.support);
    }
    return total > 0.0 ? sum / total : 0.0;
}

IgF1Result ig_f1(const PredictionSet& preds) {
    if (preds.rows.empty()) throw std::invalid_argument("ig_f1: empty prediction set");
    size_t tp = 0, fp = 0, fn = 0;
    for (const auto& r : preds.rows) {
        const bool pred_active = r.pred != preds.no_relation &&
                                 !preds.seen.count({r.head, r.pred, r.tail});
        const bool gold_active = r.gold != preds.no_relation &&
                                 !preds.seen.count({r.head, r.gold, r.tail});
        if (r.pred == r.gold) {
            if (pred_active && gold_active) ++tp;
        } else {
            if (pred_active) ++fp;
            if (gold_active) ++fn;
        }
    }
    IgF1Result res;
    res.empty_pool = (tp + fp + fn) == 0;
    res.value = res.empty_pool ? 0.0 : f1_from_counts(tp, fp, fn);
    return res;
}

MetricsReport compute_report(const PredictionSet& preds) {
    MetricsReport rep;
    rep.f1_micro = f1_micro(preds);
    rep.f1_macro = f1_macro(preds, false);
    rep.f1_macro_weighted = f1_macro(preds, true);
    const auto ig = ig_f1(preds);
    rep.ig_f1 = ig.value;
    rep.ig_f1_empty_pool = ig.empty_pool;
    rep.per_class = per_class_table(preds);
    return rep;
}

void write_report_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_report_csv: cannot open " + path);
    char buf[96];
    out << "metric,value\n";
    std::snprintf(buf, sizeof(buf), "f1_micro,%.10g\n", report.f1_micro);
    out << buf;
    std::snprintf(buf, sizeof(buf), "f1_macro,%.10g\n", report.f1_macro);
    out << buf;
    std::snprintf(buf, sizeof(buf), "f1_macro_weighted,%.10g\n", report.f1_macro_weighted);
    out << buf;
    std::snprintf(buf, sizeof(buf), "ig_f1,%.10g\n", report.ig_f1);
    out << buf;
}

void write_per_class_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_per_class_csv: cannot open " + path);
    out << "class,support,precision,recall,f1\n";
    char buf[128];
    for (const auto& s : report.per_class) {
        std::snprintf(buf, sizeof(buf), "%d,%zu,%.10g,%.10g,%.10g\n", s.label, s.support,
                      s.precision, s.recall, s.f1);
        out << buf;
    }
}

void print_report(const MetricsReport& report, std::ostream& os) {
    char buf[96];
    os << "metric              value\n";
    std::snprintf(buf, sizeof(buf), "f1_micro            %.4f\n", report.f1_micro);
    os << buf;
    std::snprintf(buf, sizeof(buf), "f1_macro            %.4f\n", report.f1_macro);
    os << buf;
    std::snprintf(buf, sizeof(buf), "f1_macro_weighted   %.4f\n", report.f1_macro_weighted);
    os << buf;
    std::snprintf(buf, sizeof(buf), "ig_f1               %.4f%s\n", report.ig_f1,
                  report.ig_f1_empty_pool ? " (empty pool)" : "");
    os << buf;
}

double EpochAccuracy::pooled(size_t lo, size_t hi) const {
    double correct = 0.0;
    size_t total = 0;
    for (size_t i = lo; i <= hi && i < learned_accuracy.size(); ++i) {
        correct += learned_accuracy[i] * static_cast<double>(learned_count[i]);
        total += learned_count[i];
    }
    return total ? correct / static_cast<double>(total) : 0.0;
}

EpochAccuracy accuracy_by_epoch(const LearningOrderPartition& part, const Dataset& ds) {
    std::map<std::string, bool> gold_by_id;
    for (const auto& d : ds.docs) {
        for (size_t i = 0; i < d.instances.size(); ++i) {
            if (!d.instances[i].gold_correct)
                throw std::domain_error("accuracy_by_epoch: instance " + instance_id(d, i) +
                                        " lacks gold_correct provenance");
            gold_by_id[instance_id(d, i)] = *d.instances[i].gold_correct;
        }
    }
    auto subset_accuracy = [&](const std::set<std::string>& subset, size_t& count) {
        size_t correct = 0;
        count = subset.size();
        for (const auto& id : subset) {
            auto it = gold_by_id.find(id);
            if (it == gold_by_id.end())
                throw std::domain_error("accuracy_by_epoch: partition id " + id +
                                        " not in dataset");
            if (it->second) ++correct;
        }
        return count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0;
    };

    EpochAccuracy acc;
    for (const auto& subset : part.learned) {
        size_t n = 0;
        acc.learned_accuracy.push_back(subset_accuracy(subset, n));
        acc.learned_count.push_back(n);
    }
    acc.not_learned_accuracy = subset_accuracy(part.not_learned, acc.not_learned_count);
    return acc;
}

double jaccard_cumulative(const LearningOrderPartition& a, const LearningOrderPartition& b,
                          JsiMode mode) {
    if (a.epochs() != b.epochs())
        throw std::invalid_argument("jaccard_cumulative: partitions have different epoch counts");
    if (a.epochs() == 0) throw std::invalid_argument("jaccard_cumulative: empty partitions");
    double sum = 0.0;
    for (size_t i = 0; i < a.epochs(); ++i) {
        const auto& sa = a.learned[i];
        const auto& sb = b.learned[i];
        if (sa.empty() && sb.empty()) {
            sum += 1.0;
            continue;
        }
        std::vector<std::string> inter;
        std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(),
                              std::back_inserter(inter));
        const size_t uni = sa.size() + sb.size() - inter.size();
        sum += static_cast<double>(inter.size()) / static_cast<double>(uni);
    }
    return mode == JsiMode::sum ? sum : sum / static_cast<double>(a.epochs());
}

DifficultClasses difficult_classes(const PredictionSet& stage1_preds, double threshold) {
    DifficultClasses out;
    std::map<int, size_t> gold_n, correct_n;
    for (const auto& r : stage1_preds.rows) {
        if (r.gold == stage1_preds.no_relation) continue;
        ++gold_n[r.gold];
        if (r.pred == r.gold) ++correct_n[r.gold];
    }
    for (const auto& [cls, n] : gold_n) {
        const double acc = static_cast<double>(correct_n.count(cls) ? correct_n[cls] : 0) /
                           static_cast<double>(n);
        out.accuracy[cls] = acc;
        if (acc < threshold) out.classes.insert(cls);
    }

    size_t tp = 0, fp = 0, fn = 0;
    for (const auto& r : stage1_preds.rows) {
        const bool pred_in = out.classes.count(r.pred) > 0;
        const bool gold_in = out.classes.count(r.gold) > 0;
        if (r.pred == r.gold) {
            if (pred_in) ++tp;
        } else {
            if (pred_in) ++fp;
            if (gold_in) ++fn;
        }
    }
    out.sliced_f1 = f1_from_counts(tp, fp, fn);
    return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0; // average of 1-based ranks
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

} // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("spearman: need two equal-length series of size >= 2");
    return pearson(average_ranks(x), average_ranks(y));
}

double spearman_pvalue_positive(const std::vector<double>& x, const std::vector<double>& y,
                                size_t permutations, uint64_t seed) {
    const double observed = spearman(x, y);
    Rng rng(Rng::derive_seed(seed, "spearman.perm"));
    std::vector<double> shuffled = y;
    size_t at_least = 0;
    for (size_t p = 0; p < permutations; ++p) {
        rng.shuffle(shuffled);
        if (spearman(x, shuffled) >= observed) ++at_least;
    }
    return static_cast<double>(at_least + 1) / static_cast<double>(permutations + 1);
}

} // namespace relcl
