#include "ghostseg/evaluator.hpp"

#include <algorithm>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ghostseg/text_format.hpp"

namespace ghostseg {

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> rows, std::vector<std::string> cols)
    : rows_(std::move(rows)), cols_(std::move(cols)), counts_(rows_.size() * cols_.size(), 0) {}

std::uint64_t ConfusionMatrix::row_sum(std::size_t i) const {
    std::uint64_t s = 0;
    for (std::size_t j = 0; j < cols(); ++j) s += at(i, j);
    return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t j) const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < rows(); ++i) s += at(i, j);
    return s;
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw std::invalid_argument("ConfusionMatrix: shape mismatch");
    for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += o.counts_[k];
    return *this;
}

namespace {

std::vector<std::string> label_rows() {
    std::vector<std::string> out;
    for (Label l : kAllLabels) out.emplace_back(label_name(l));
    return out;
}

std::vector<std::string> class_cols(const Setup& s) {
    std::vector<std::string> out;
    for (auto c : s.classes) out.emplace_back(train_class_name(c));
    return out;
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const Label> truth, const Setup& setup,
                                 const std::vector<bool>& exclude) {
    if (predictions.size() != truth.size())
        throw std::invalid_argument("confusion_matrix: prediction and truth lengths differ");
    if (!exclude.empty() && exclude.size() != truth.size())
        throw std::invalid_argument("confusion_matrix: mask length differs");
    ConfusionMatrix m(label_rows(), class_cols(setup));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!exclude.empty() && exclude[i]) continue;
        const int p = predictions[i];
        if (p < 0 || static_cast<std::size_t>(p) >= setup.class_count())
            throw std::invalid_argument("confusion_matrix: prediction " + std::to_string(p) + " outside setup classes");
        ++m.at(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(p));
    }
    return m;
}

ConfusionMatrix confusion_matrix(std::span<const std::string> predictions, std::span<const std::string> truth,
                                 const Setup& setup) {
    if (predictions.size() != truth.size())
        throw std::invalid_argument("confusion_matrix: prediction and truth lengths differ");
    std::vector<int> pred;
    std::vector<Label> lab;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        lab.push_back(parse_label(truth[i]));
        int idx = -1;
        for (std::size_t c = 0; c < setup.class_count(); ++c)
            if (train_class_name(setup.classes[c]) == predictions[i]) idx = static_cast<int>(c);
        if (idx < 0)
            throw std::invalid_argument("confusion_matrix: unknown class token '" + predictions[i] + "' for setup " +
                                        std::to_string(setup.id));
        pred.push_back(idx);
    }
    return confusion_matrix(pred, lab, setup);
}

ConfusionMatrix grouped_truth_view(const ConfusionMatrix& m) {
    ConfusionMatrix g({"background", "object", "ghost_object", "type1_second_bounce"}, m.col_names());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const Label l = parse_label(m.row_names()[i]);
        const std::size_t row = l == Label::Background         ? 0
                                : is_real_object(l)            ? 1
                                : is_ghost(l)                  ? 2
                                                               : 3;
        for (std::size_t j = 0; j < m.cols(); ++j) g.at(row, j) += m.at(i, j);
    }
    return g;
}

double precision_percent(std::uint64_t tp, std::uint64_t fp) {
    return tp + fp == 0 ? 0.0 : 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double recall_percent(std::uint64_t tp, std::uint64_t fn) {
    return tp + fn == 0 ? 0.0 : 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double f1_percent(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

std::vector<ClassScore> class_scores(const ConfusionMatrix& m, const Setup& setup) {
    if (m.cols() != setup.class_count()) throw std::invalid_argument("class_scores: column count does not match setup");
    std::vector<int> truth_class(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) truth_class[i] = remap_label(parse_label(m.row_names()[i]), setup);
    std::vector<ClassScore> out;
    for (std::size_t c = 0; c < setup.class_count(); ++c) {
        ClassScore s;
        s.name = std::string(train_class_name(setup.classes[c]));
        for (std::size_t i = 0; i < m.rows(); ++i) {
            const bool is_c = truth_class[i] == static_cast<int>(c);
            for (std::size_t j = 0; j < m.cols(); ++j) {
                const auto v = m.at(i, j);
                if (is_c && j == c) s.tp += v;
                else if (is_c) s.fn += v;
                else if (j == c) s.fp += v;
            }
        }
        s.precision = precision_percent(s.tp, s.fp);
        s.recall = recall_percent(s.tp, s.fn);
        s.f1 = f1_percent(s.precision, s.recall);
        out.push_back(std::move(s));
    }
    return out;
}

double macro_average(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("macro_average: no scores to average");
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double macro_average(std::span<const ClassScore> scores, double ClassScore::*field,
                     const std::vector<std::string>& exclude) {
    std::vector<double> kept;
    for (const auto& s : scores)
        if (std::find(exclude.begin(), exclude.end(), s.name) == exclude.end()) kept.push_back(s.*field);
    if (kept.empty()) throw std::invalid_argument("macro_average: every label is excluded");
    return macro_average(kept);
}

GhostFp ghost_fp_fraction(const ConfusionMatrix& m, const std::vector<std::size_t>& predicted_cols,
                          const std::vector<Label>& real_truth, std::string target) {
    GhostFp g;
    g.target = std::move(target);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const Label l = parse_label(m.row_names()[i]);
        if (std::find(real_truth.begin(), real_truth.end(), l) != real_truth.end()) continue;
        for (auto j : predicted_cols) {
            if (j >= m.cols()) throw std::out_of_range("ghost_fp_fraction: column out of range");
            g.total_fp += m.at(i, j);
            if (is_ghost(l)) g.ghost_fp += m.at(i, j);
        }
    }
    g.no_false_positives = g.total_fp == 0;
    g.percent = g.no_false_positives ? 0.0 : 100.0 * static_cast<double>(g.ghost_fp) / static_cast<double>(g.total_fp);
    return g;
}

std::vector<GhostFp> ghost_fp_fractions(const ConfusionMatrix& m, const Setup& setup) {
    std::vector<GhostFp> out;
    const int obj = setup.index_of(TrainClass::Obj);
    const int ped = setup.index_of(TrainClass::Ped);
    const int cyc = setup.index_of(TrainClass::Cycl);
    if (obj >= 0)
        out.push_back(ghost_fp_fraction(m, {static_cast<std::size_t>(obj)}, {Label::Pedestrian, Label::Cyclist}, "obj"));
    if (ped >= 0) out.push_back(ghost_fp_fraction(m, {static_cast<std::size_t>(ped)}, {Label::Pedestrian}, "ped"));
    if (cyc >= 0) out.push_back(ghost_fp_fraction(m, {static_cast<std::size_t>(cyc)}, {Label::Cyclist}, "cycl"));
    if (ped >= 0 && cyc >= 0)
        out.push_back(ghost_fp_fraction(m, {static_cast<std::size_t>(ped), static_cast<std::size_t>(cyc)},
                                        {Label::Pedestrian, Label::Cyclist}, "ped+cycl"));
    return out;
}

double EvalReport::macro_precision() const {
    const auto s = scores();
    return macro_average(s, &ClassScore::precision);
}

double EvalReport::macro_recall() const {
    const auto s = scores();
    return macro_average(s, &ClassScore::recall);
}

double EvalReport::macro_f1() const {
    const auto s = scores();
    return macro_average(s, &ClassScore::f1);
}

ClassScore EvalReport::score(const std::string& class_name) const {
    for (auto& s : scores())
        if (s.name == class_name) return s;
    throw std::invalid_argument("setup " + std::to_string(setup_id) + " has no class '" + class_name + "'");
}

EvalReport make_report(int setup_id, std::string checkpoint_id, std::string dataset_hash, ConfusionMatrix m) {
    const auto& setup = setup_by_id(setup_id);
    if (m.cols() != setup.class_count()) throw std::invalid_argument("make_report: matrix does not match setup");
    return {setup_id, std::move(checkpoint_id), std::move(dataset_hash), std::move(m)};
}

// ---- report file -----------------------------------------------------------

namespace {

constexpr const char* kReportMagic = "# ghostseg evaluation report v1";

void write_matrix(std::ostream& out, const ConfusionMatrix& m) {
    out << "truth\\pred";
    for (const auto& c : m.col_names()) out << ',' << c;
    out << ",total\n";
    for (std::size_t i = 0; i < m.rows(); ++i) {
        out << m.row_names()[i];
        for (std::size_t j = 0; j < m.cols(); ++j) out << ',' << m.at(i, j);
        out << ',' << m.row_sum(i) << '\n';
    }
}

std::string joined(const std::vector<std::string>& v, char sep) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? std::string(1, sep) : std::string()) + v[i];
    return s;
}

}  // namespace

void write_report(std::ostream& out, const EvalReport& r) {
    const auto& setup = r.setup();
    out << kReportMagic << '\n';
    out << "setup," << r.setup_id << '\n';
    out << "classes," << joined(class_cols(setup), ';') << '\n';
    out << "checkpoint," << r.checkpoint_id << '\n';
    out << "dataset," << r.dataset_hash << '\n';
    out << "points," << r.confusion.total() << '\n';
    out << "\n[confusion]\n";
    write_matrix(out, r.confusion);
    out << "\n[confusion_grouped_truth]\n";
    write_matrix(out, grouped_truth_view(r.confusion));
    out << "\n[scores]\nclass,tp,fp,fn,precision,recall,f1\n";
    for (const auto& s : r.scores())
        out << s.name << ',' << s.tp << ',' << s.fp << ',' << s.fn << ',' << format_percent(s.precision) << ','
            << format_percent(s.recall) << ',' << format_percent(s.f1) << '\n';
    out << "average_excluding_bg,,,," << format_percent(r.macro_precision()) << ',' << format_percent(r.macro_recall())
        << ',' << format_percent(r.macro_f1()) << '\n';
    out << "\n[ghost_fp]\ntarget,ghost_fp,total_fp,percent,no_false_positives\n";
    for (const auto& g : r.ghost_fps())
        out << g.target << ',' << g.ghost_fp << ',' << g.total_fp << ',' << format_percent(g.percent) << ','
            << (g.no_false_positives ? 1 : 0) << '\n';
}

std::string report_text(const EvalReport& r) {
    std::ostringstream ss;
    write_report(ss, r);
    return ss.str();
}

EvalReport parse_report(std::istream& in) {
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    auto fail = [](std::size_t ln, const std::string& msg) {
        throw std::runtime_error("report line " + std::to_string(ln + 1) + ": " + msg);
    };
    if (lines.empty() || lines[0] != kReportMagic) fail(0, "missing report header");
    auto field = [&](std::size_t ln, const std::string& key) {
        if (ln >= lines.size()) fail(ln, "expected '" + key + "'");
        const auto& l = lines[ln];
        if (l.rfind(key + ",", 0) != 0) fail(ln, "expected '" + key + "'");
        return l.substr(key.size() + 1);
    };
    EvalReport r;
    try {
        r.setup_id = static_cast<int>(parse_int(field(1, "setup"), "setup"));
    } catch (const std::invalid_argument& e) {
        fail(1, e.what());
    }
    const auto& setup = setup_by_id(r.setup_id);
    if (field(2, "classes") != joined(class_cols(setup), ';')) fail(2, "class list does not match setup");
    r.checkpoint_id = field(3, "checkpoint");
    r.dataset_hash = field(4, "dataset");
    const auto points = field(5, "points");

    std::size_t ln = 6;
    while (ln < lines.size() && lines[ln] != "[confusion]") ++ln;
    if (ln >= lines.size()) fail(ln, "missing [confusion] section");
    ln += 2;
    ConfusionMatrix m(label_rows(), class_cols(setup));
    for (std::size_t i = 0; i < m.rows(); ++i, ++ln) {
        if (ln >= lines.size()) fail(ln, "truncated confusion matrix");
        const auto cells = split(lines[ln], ',');
        if (cells.size() != m.cols() + 2 || cells[0] != m.row_names()[i]) fail(ln, "malformed confusion row");
        try {
            for (std::size_t j = 0; j < m.cols(); ++j)
                m.at(i, j) = static_cast<std::uint64_t>(parse_int(cells[j + 1], "count"));
        } catch (const std::invalid_argument& e) {
            fail(ln, e.what());
        }
    }
    r.confusion = std::move(m);
    if (points != std::to_string(r.confusion.total())) fail(5, "point total disagrees with the matrix");
    std::ostringstream again;
    write_report(again, r);
    std::istringstream check(again.str());
    std::size_t k = 0;
    for (std::string line; std::getline(check, line); ++k)
        if (k >= lines.size() || lines[k] != line) fail(k, "content disagrees with the confusion matrix");
    if (k != lines.size()) fail(k, "trailing content");
    return r;
}

// ---- terminal rendering ----------------------------------------------------

namespace {

std::string table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& r : rows)
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (width.size() <= j) width.push_back(0);
            width[j] = std::max(width[j], r[j].size());
        }
    std::ostringstream ss;
    for (const auto& r : rows) {
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (j == 0) ss << std::left << std::setw(static_cast<int>(width[j])) << r[j];
            else ss << "  " << std::right << std::setw(static_cast<int>(width[j])) << r[j];
        }
        ss << '\n';
    }
    return ss.str();
}

void matrix_rows(std::vector<std::vector<std::string>>& rows, const ConfusionMatrix& m) {
    std::vector<std::string> head{"truth \\ pred"};
    for (const auto& c : m.col_names()) head.push_back(c);
    rows.push_back(head);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        std::vector<std::string> row{m.row_names()[i]};
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(std::to_string(m.at(i, j)));
        rows.push_back(row);
    }
}

}  // namespace

std::string render_report(const EvalReport& r) {
    std::ostringstream ss;
    ss << "setup " << r.setup_id << " (" << joined(class_cols(r.setup()), ',') << "), " << r.confusion.total()
       << " points\n\n";
    std::vector<std::vector<std::string>> m;
    matrix_rows(m, r.confusion);
    ss << table(m) << '\n';
    std::vector<std::vector<std::string>> s{{"class", "precision", "recall", "F1"}};
    for (const auto& c : r.scores())
        s.push_back({c.name, format_percent(c.precision), format_percent(c.recall), format_percent(c.f1)});
    s.push_back({"avg (no bg)", format_percent(r.macro_precision()), format_percent(r.macro_recall()),
                 format_percent(r.macro_f1())});
    ss << table(s);
    const auto g = r.ghost_fps();
    if (!g.empty()) {
        std::vector<std::vector<std::string>> t{{"false positives", "ghost", "total", "ghost %"}};
        for (const auto& x : g)
            t.push_back({x.target, std::to_string(x.ghost_fp), std::to_string(x.total_fp),
                         x.no_false_positives ? "n/a" : format_percent(x.percent)});
        ss << '\n' << table(t);
    }
    return ss.str();
}

std::string render_comparison(std::span<const EvalReport> reports) {
    std::vector<std::string> names;
    for (const auto& r : reports)
        for (const auto& s : r.scores())
            if (std::find(names.begin(), names.end(), s.name) == names.end()) names.push_back(s.name);
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{"setup"};
    for (const auto& n : names) head.push_back("F1 " + n);
    head.insert(head.end(), {"avg P", "avg R", "avg F1"});
    rows.push_back(head);
    for (const auto& r : reports) {
        std::vector<std::string> row{std::to_string(r.setup_id)};
        const auto sc = r.scores();
        for (const auto& n : names) {
            auto it = std::find_if(sc.begin(), sc.end(), [&](const ClassScore& c) { return c.name == n; });
            row.push_back(it == sc.end() ? "-" : format_percent(it->f1));
        }
        row.push_back(format_percent(r.macro_precision()));
        row.push_back(format_percent(r.macro_recall()));
        row.push_back(format_percent(r.macro_f1()));
        rows.push_back(row);
    }
    return table(rows);
}

}  // namespace ghostseg
