#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ghostseg/pipeline.hpp"

namespace ghostseg {

/// Count matrix with named rows (truth) and columns (prediction).
class ConfusionMatrix {
public:
    ConfusionMatrix() = default;
    ConfusionMatrix(std::vector<std::string> rows, std::vector<std::string> cols);

    const std::vector<std::string>& row_names() const { return rows_; }
    const std::vector<std::string>& col_names() const { return cols_; }
    std::size_t rows() const { return rows_.size(); }
    std::size_t cols() const { return cols_.size(); }

    std::uint64_t at(std::size_t i, std::size_t j) const { return counts_[i * cols_.size() + j]; }
    std::uint64_t& at(std::size_t i, std::size_t j) { return counts_[i * cols_.size() + j]; }
    std::uint64_t row_sum(std::size_t i) const;
    std::uint64_t col_sum(std::size_t j) const;
    std::uint64_t total() const;

    /// Element-wise sum; shapes and names must agree.
    ConfusionMatrix& operator+=(const ConfusionMatrix& o);
    bool operator==(const ConfusionMatrix&) const = default;

private:
    std::vector<std::string> rows_;
    std::vector<std::string> cols_;
    std::vector<std::uint64_t> counts_;
};

/// Rows: the six ground-truth labels; columns: the setup's training classes.
/// Points with `exclude[i]` set (padding duplicates) are skipped.
ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const Label> truth, const Setup& setup,
                                 const std::vector<bool>& exclude = {});
/// Token form: truth label names and prediction class names. Unknown tokens
/// throw std::invalid_argument.
ConfusionMatrix confusion_matrix(std::span<const std::string> predictions, std::span<const std::string> truth,
                                 const Setup& setup);

/// Truth rows folded into background, object, ghost-object and
/// type1_second_bounce.
ConfusionMatrix grouped_truth_view(const ConfusionMatrix& m);

/// Percent scores; zero denominators give 0.
double precision_percent(std::uint64_t tp, std::uint64_t fp);
double recall_percent(std::uint64_t tp, std::uint64_t fn);
double f1_percent(double precision, double recall);

struct ClassScore {
    std::string name;
    std::uint64_t tp = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

/// One entry per setup class with truth remapped to the setup.
std::vector<ClassScore> class_scores(const ConfusionMatrix& m, const Setup& setup);

/// Mean over every score whose name is not in `exclude`. Throws
/// std::invalid_argument if nothing is left.
double macro_average(std::span<const ClassScore> scores, double ClassScore::*field,
                     const std::vector<std::string>& exclude = {"bg"});
double macro_average(std::span<const double> values);

struct GhostFp {
    std::string target;
    std::uint64_t ghost_fp = 0;
    std::uint64_t total_fp = 0;
    double percent = 0.0;
    bool no_false_positives = false;

    bool operator==(const GhostFp&) const = default;
};

/// Among points predicted as one of `predicted_cols` whose truth is not in
/// `real_truth`, the share carrying a ghost label.
GhostFp ghost_fp_fraction(const ConfusionMatrix& m, const std::vector<std::size_t>& predicted_cols,
                          const std::vector<Label>& real_truth, std::string target);

/// Per real-object class of the setup, plus the pedestrian+cyclist group when
/// the setup resolves both.
std::vector<GhostFp> ghost_fp_fractions(const ConfusionMatrix& m, const Setup& setup);

struct EvalReport {
    int setup_id = 0;
    std::string checkpoint_id;
    std::string dataset_hash;
    ConfusionMatrix confusion;

    const Setup& setup() const { return setup_by_id(setup_id); }
    std::vector<ClassScore> scores() const { return class_scores(confusion, setup()); }
    std::vector<GhostFp> ghost_fps() const { return ghost_fp_fractions(confusion, setup()); }
    double macro_precision() const;
    double macro_recall() const;
    double macro_f1() const;
    ClassScore score(const std::string& class_name) const;

    bool operator==(const EvalReport&) const = default;
};

EvalReport make_report(int setup_id, std::string checkpoint_id, std::string dataset_hash, ConfusionMatrix m);

/// Delimited report: header block, confusion matrices, score and ghost-FP
/// tables, each section introduced by a bracketed title.
void write_report(std::ostream& out, const EvalReport& r);
std::string report_text(const EvalReport& r);
/// Inverse of write_report. Throws std::runtime_error on malformed input or
/// if a listed score disagrees with the matrix.
EvalReport parse_report(std::istream& in);

/// Aligned tables for terminals.
std::string render_report(const EvalReport& r);
/// One row per report: per-class F1 and the background-excluded averages.
std::string render_comparison(std::span<const EvalReport> reports);

}  // namespace ghostseg
