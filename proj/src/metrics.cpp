#include "glamor/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "glamor/errors.hpp"
#include "glamor/image.hpp"

namespace glamor {

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    if (preds.size() != labels.size())
        throw ValueError("accuracy: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
    if (preds.empty())
        throw ValueError("accuracy: empty input");
    size_t hit = 0;
    for (size_t i = 0; i < preds.size(); ++i)
        hit += preds[i] == labels[i];
    return static_cast<double>(hit) / static_cast<double>(preds.size());
}

int64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), int64_t{0});
}

int64_t ConfusionMatrix::trace() const {
    int64_t t = 0;
    for (int i = 0; i < k; ++i)
        t += at(i, i);
    return t;
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels, int k) {
    if (preds.size() != labels.size())
        throw ValueError("confusion: prediction/label length mismatch");
    ConfusionMatrix cm;
    cm.k = k;
    cm.counts.assign(static_cast<size_t>(k) * static_cast<size_t>(k), 0);
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] < 0 || preds[i] >= k || labels[i] < 0 || labels[i] >= k)
            throw ValueError("confusion: value outside [0," + std::to_string(k) + ") at index " +
                             std::to_string(i));
        ++cm.at(labels[i], preds[i]);
    }
    return cm;
}

std::string confusion_to_text(const ConfusionMatrix& cm, const std::vector<std::string>& names) {
    std::ostringstream os;
    size_t name_w = 5;
    for (const auto& n : names)
        name_w = std::max(name_w, n.size());
    os << std::setw(static_cast<int>(name_w)) << "t\\p";
    for (int j = 0; j < cm.k; ++j)
        os << std::setw(9) << (j < static_cast<int>(names.size()) ? names[static_cast<size_t>(j)]
                                                                  : std::to_string(j));
    os << "\n";
    for (int i = 0; i < cm.k; ++i) {
        os << std::setw(static_cast<int>(name_w))
           << (i < static_cast<int>(names.size()) ? names[static_cast<size_t>(i)]
                                                  : std::to_string(i));
        for (int j = 0; j < cm.k; ++j)
            os << std::setw(9) << cm.at(i, j);
        os << "\n";
    }
    return os.str();
}

std::string confusion_to_json(const ConfusionMatrix& cm) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < cm.k; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < cm.k; ++j)
            row.push_back(cm.at(i, j));
        rows.push_back(row);
    }
    return nlohmann::json{{"k", cm.k}, {"counts", rows}}.dump();
}

namespace {

// Regularized lower incomplete gamma P(a,x) by series expansion.
double gamma_p_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-16)
            break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a,x) by modified Lentz continued
// fraction; valid for x >= a+1.
double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny)
            d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16)
            break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

} // namespace

double chi_square_survival(double x, int dof) {
    if (dof < 1)
        throw ValueError("chi_square_survival: dof must be >= 1");
    if (x < 0.0)
        throw ValueError("chi_square_survival: x must be >= 0");
    if (x == 0.0)
        return 1.0;
    const double a = 0.5 * static_cast<double>(dof);
    const double xx = 0.5 * x;
    if (xx < a + 1.0)
        return 1.0 - gamma_p_series(a, xx);
    return gamma_q_cf(a, xx);
}

TestResult stuart_maxwell(const ConfusionMatrix& cm, int drop_category) {
    if (cm.k < 2)
        throw ValueError("stuart_maxwell: needs K >= 2 categories");

    // Remove categories absent from both margins; they carry no information
    // and make the covariance matrix singular.
    std::vector<int> active;
    for (int i = 0; i < cm.k; ++i) {
        int64_t row = 0, col = 0;
        for (int j = 0; j < cm.k; ++j) {
            row += cm.at(i, j);
            col += cm.at(j, i);
        }
        if (row + col > 0)
            active.push_back(i);
    }
    if (active.empty())
        throw ValueError("stuart_maxwell: empty table");

    // Categories that never appear off the diagonal are in perfect agreement:
    // their margin difference is identically zero with zero variance, so they
    // cannot contribute evidence against marginal homogeneity. Dropping them
    // also keeps an identical-predictions table well defined (statistic 0).
    std::vector<int> keep;
    for (int i : active) {
        bool detached = true;
        for (int j = 0; j < cm.k && detached; ++j)
            if (j != i && (cm.at(i, j) != 0 || cm.at(j, i) != 0))
                detached = false;
        if (!detached)
            keep.push_back(i);
    }
    if (keep.empty()) {
        // purely diagonal: the margins agree exactly
        TestResult result;
        result.statistic = 0.0;
        result.dof = std::max<int>(1, static_cast<int>(active.size()) - 1);
        result.p_value = 1.0;
        return result;
    }
    const int k = static_cast<int>(keep.size());
    if (k < 2)
        throw ValueError("stuart_maxwell: table degenerate, fewer than 2 active categories");

    if (drop_category == -1)
        drop_category = k - 1;
    if (drop_category < 0 || drop_category >= k)
        throw ValueError("stuart_maxwell: drop_category out of range");

    std::vector<int> idx;
    for (int i = 0; i < k; ++i)
        if (i != drop_category)
            idx.push_back(keep[static_cast<size_t>(i)]);
    const int m = k - 1;

    std::vector<double> d(static_cast<size_t>(m));
    std::vector<double> v(static_cast<size_t>(m) * static_cast<size_t>(m));
    for (int a = 0; a < m; ++a) {
        const int i = idx[static_cast<size_t>(a)];
        int64_t row = 0, col = 0;
        for (int j = 0; j < cm.k; ++j) {
            row += cm.at(i, j);
            col += cm.at(j, i);
        }
        d[static_cast<size_t>(a)] = static_cast<double>(row - col);
        for (int b = 0; b < m; ++b) {
            const int j = idx[static_cast<size_t>(b)];
            v[static_cast<size_t>(a * m + b)] =
                a == b ? static_cast<double>(row + col - 2 * cm.at(i, i))
                       : -static_cast<double>(cm.at(i, j) + cm.at(j, i));
        }
    }

    // Solve V x = d by Gaussian elimination with partial pivoting.
    std::vector<double> x = d;
    std::vector<double> a = v;
    std::vector<int> perm(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i)
        perm[static_cast<size_t>(i)] = i;
    double scale = 0.0;
    for (double val : v)
        scale = std::max(scale, std::abs(val));
    if (scale == 0.0)
        scale = 1.0;
    for (int col = 0; col < m; ++col) {
        int pivot = col;
        for (int r = col + 1; r < m; ++r)
            if (std::abs(a[static_cast<size_t>(r * m + col)]) >
                std::abs(a[static_cast<size_t>(pivot * m + col)]))
                pivot = r;
        if (std::abs(a[static_cast<size_t>(pivot * m + col)]) < 1e-12 * scale) {
            std::string cats;
            for (int i : idx)
                cats += (cats.empty() ? "" : ",") + std::to_string(i);
            throw ValueError(
                "stuart_maxwell: covariance matrix singular; remaining categories {" + cats +
                "} collapse under marginal homogeneity");
        }
        if (pivot != col) {
            for (int j = 0; j < m; ++j)
                std::swap(a[static_cast<size_t>(col * m + j)], a[static_cast<size_t>(pivot * m + j)]);
            std::swap(x[static_cast<size_t>(col)], x[static_cast<size_t>(pivot)]);
        }
        for (int r = col + 1; r < m; ++r) {
            const double f =
                a[static_cast<size_t>(r * m + col)] / a[static_cast<size_t>(col * m + col)];
            for (int j = col; j < m; ++j)
                a[static_cast<size_t>(r * m + j)] -= f * a[static_cast<size_t>(col * m + j)];
            x[static_cast<size_t>(r)] -= f * x[static_cast<size_t>(col)];
        }
    }
    for (int r = m - 1; r >= 0; --r) {
        for (int j = r + 1; j < m; ++j)
            x[static_cast<size_t>(r)] -=
                a[static_cast<size_t>(r * m + j)] * x[static_cast<size_t>(j)];
        x[static_cast<size_t>(r)] /= a[static_cast<size_t>(r * m + r)];
    }

    TestResult result;
    result.dof = m;
    result.statistic = 0.0;
    for (int i = 0; i < m; ++i)
        result.statistic += d[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
    // Round-off can push a symmetric table's statistic a hair below zero.
    result.statistic = std::max(result.statistic, 0.0);
    result.p_value = chi_square_survival(result.statistic, result.dof);
    return result;
}

void export_attention_pgm(const TensorF& map, int64_t out_h, int64_t out_w,
                          const std::string& path) {
    if (map.rank() != 2)
        throw ShapeError("export_attention_pgm: expected [H,W] map, got " +
                         shape_str(map.shape()));
    TensorF up = resize_bilinear(map, out_h, out_w);
    float peak = 0.0f;
    for (float v : up.vec())
        peak = std::max(peak, v);
    if (peak <= 0.0f)
        peak = 1.0f;
    for (auto& v : up.vec())
        v /= peak;
    save_pgm(up, path);
}

void export_attention_text(const TensorF& map, const std::string& path) {
    if (map.rank() != 2)
        throw ShapeError("export_attention_text: expected [H,W] map");
    std::ofstream out(path);
    if (!out)
        throw IoError(path + ": cannot open for writing");
    out << map.dim(0) << " " << map.dim(1) << "\n";
    out << std::setprecision(17);
    for (int64_t i = 0; i < map.dim(0); ++i) {
        for (int64_t j = 0; j < map.dim(1); ++j)
            out << (j ? " " : "") << map.at(i, j);
        out << "\n";
    }
    if (!out)
        throw IoError(path + ": write failed");
}

TensorF read_attention_text(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError(path + ": cannot open");
    int64_t h = 0, w = 0;
    if (!(in >> h >> w) || h < 1 || w < 1)
        throw FormatError(path + ": bad attention text header");
    TensorF map({h, w});
    for (int64_t i = 0; i < h * w; ++i)
        if (!(in >> map[i]))
            throw FormatError(path + ": truncated attention grid");
    return map;
}

} // namespace glamor
