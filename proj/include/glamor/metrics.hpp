#pragma once

#include <string>
#include <vector>

#include "glamor/tensor.hpp"

namespace glamor {

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

// K x K counts, rows = ground truth, columns = prediction.
struct ConfusionMatrix {
    int k = 0;
    std::vector<int64_t> counts; // row-major k*k

    int64_t& at(int truth, int pred) { return counts[static_cast<size_t>(truth * k + pred)]; }
    int64_t at(int truth, int pred) const { return counts[static_cast<size_t>(truth * k + pred)]; }
    int64_t total() const;
    int64_t trace() const;
    double accuracy() const { return static_cast<double>(trace()) / static_cast<double>(total()); }
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels, int k);

std::string confusion_to_text(const ConfusionMatrix& cm, const std::vector<std::string>& names);
std::string confusion_to_json(const ConfusionMatrix& cm);

struct TestResult {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
};

// Marginal-homogeneity chi-square test on a paired K x K table; reduces to
// McNemar for K = 2. drop_category picks which category is removed to form
// the (K-1)-dimensional system (-1 = last); the statistic does not depend on
// the choice. Categories absent from both margins are removed first.
TestResult stuart_maxwell(const ConfusionMatrix& cm, int drop_category = -1);

// Upper tail of the chi-square distribution via the regularized incomplete
// gamma function (series / continued fraction), abs err < 1e-10.
double chi_square_survival(double x, int dof);

// Upsamples the attention grid to out_h x out_w, rescales so the peak maps
// to 255, and writes a binary PGM.
void export_attention_pgm(const TensorF& map, int64_t out_h, int64_t out_w,
                          const std::string& path);

// Plain-text grid of the raw attention values.
void export_attention_text(const TensorF& map, const std::string& path);
TensorF read_attention_text(const std::string& path);

} // namespace glamor
