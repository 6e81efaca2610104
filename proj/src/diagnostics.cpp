#include "paraformer/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace paraformer {

double pairwise_l2(const Matrix& h) {
    const Index n = h.rows();
    if (n < 2) throw ArgumentError("pairwise_l2: need at least two rows");
    double total = 0.0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) total += (h.row(i) - h.row(j)).norm();
    return 2.0 * total / (static_cast<double>(n) * static_cast<double>(n - 1));
}

CosineResult cosine_sim(const Matrix& h) {
    std::vector<Index> keep;
    std::vector<double> norms;
    for (Index i = 0; i < h.rows(); ++i) {
        const double nr = h.row(i).norm();
        if (nr > 0.0) {
            keep.push_back(i);
            norms.push_back(nr);
        }
    }
    CosineResult out;
    out.zero_rows = h.rows() - static_cast<Index>(keep.size());
    const std::size_t m = keep.size();
    if (m < 2) throw ArgumentError("cosine_sim: fewer than two nonzero rows");
    double total = 0.0;
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a + 1; b < m; ++b)
            total += h.row(keep[a]).dot(h.row(keep[b])) / (norms[a] * norms[b]);
    out.value = 2.0 * total / (static_cast<double>(m) * static_cast<double>(m - 1));
    return out;
}

SpectralSplit spectral_split(const Matrix& h) {
    if (h.rows() == 0) throw ArgumentError("spectral_split: empty matrix");
    SpectralSplit s;
    const RowVector mean = h.colwise().mean();
    s.dc = mean.replicate(h.rows(), 1);
    s.hc = h - s.dc;
    return s;
}

std::optional<double> hc_energy_ratio(const Matrix& pre, const Matrix& post) {
    require_shape(pre.rows() == post.rows() && pre.cols() == post.cols(), "hc_energy_ratio: shapes differ");
    const double num = spectral_split(pre).hc.norm();
    const double den = spectral_split(post).hc.norm();
    if (num == 0.0 || den == 0.0) return std::nullopt;
    return num / den;
}

double smoothing_rate_closed_form(double alpha_p, Index n, double wv_norm) {
    if (alpha_p < 0.0 || n < 1 || !(wv_norm > 0.0)) throw ArgumentError("smoothing_rate_closed_form: need alpha >= 0, n >= 1, wv_norm > 0");
    const double e = std::exp(2.0 * alpha_p);
    return std::sqrt((e + static_cast<double>(n) - 1.0) / (static_cast<double>(n) * e * wv_norm));
}

SmoothingL1 smoothing_rate_l1(const Matrix& logits, double wv_norm) {
    if (!all_finite(logits)) throw NumericError("smoothing_rate_l1: non-finite logits");
    const Matrix s = softmax_rows(logits);
    SmoothingL1 out;
    out.c = s.cwiseAbs().colwise().sum().maxCoeff();
    out.lambda = std::sqrt(out.c) * wv_norm;
    return out;
}

Theorem2Instance theorem2_check(const Matrix& logits) {
    require_shape(logits.rows() == logits.cols(), "theorem2_check: logits must be square");
    const Matrix s = softmax_rows(logits);
    Theorem2Instance t;
    t.c = s.colwise().sum().maxCoeff();
    if (t.c <= 1.0 + 1e-12) {
        t.skipped = true;
        return t;
    }
    const double g0 = (t.c - 1.0) / 2.0;
    const double g1 = -1.0 / t.c;
    Matrix m = g1 * s;
    m.diagonal().array() += g0;
    t.lhs = m.cwiseAbs().colwise().sum().maxCoeff();
    t.margin = t.c - t.lhs;
    t.holds = t.lhs < t.c;
    return t;
}

Theorem2Report theorem2_probe(Index n, int trials, std::uint64_t seed, double logit_std, double wv_norm) {
    if (n < 1 || trials < 0) throw ArgumentError("theorem2_probe: need n >= 1 and trials >= 0");
    Rng rng(seed);
    Theorem2Report rep;
    rep.trials = trials;
    rep.wv_norm = wv_norm;
    rep.min_margin = std::numeric_limits<double>::infinity();
    double margin_sum = 0.0;
    for (int t = 0; t < trials; ++t) {
        const Theorem2Instance inst = theorem2_check(normal_matrix(n, n, logit_std, rng));
        rep.instances.push_back(inst);
        if (inst.skipped) {
            ++rep.skipped;
            continue;
        }
        (inst.holds ? rep.passed : rep.failed) += 1;
        rep.min_margin = std::min(rep.min_margin, inst.margin);
        margin_sum += inst.margin;
    }
    const int evaluated = rep.passed + rep.failed;
    rep.mean_margin = evaluated > 0 ? margin_sum / evaluated : 0.0;
    if (evaluated == 0) rep.min_margin = 0.0;
    return rep;
}

HighpassCurve highpass_probe(const Matrix& a_stochastic, double a, int k_max, const Matrix& h) {
    const Index n = a_stochastic.rows();
    require_shape(n == a_stochastic.cols() && h.rows() == n, "highpass_probe: A must be n x n and H n x d");
    if (!(a > 0.0 && a < 1.0 / static_cast<double>(n))) throw ArgumentError("highpass_probe: a must lie in (0, 1/n)");
    if (k_max < 0) throw ArgumentError("highpass_probe: k_max must be >= 0");
    const double dev = (a_stochastic.rowwise().sum().array() - 1.0).abs().maxCoeff();
    if (dev > 1e-8 || (a_stochastic.array() < 0.0).any())
        throw NumericError("highpass_probe: A is not row-stochastic");
    const double base = spectral_split(h).dc.norm();
    if (base == 0.0) throw ArgumentError("highpass_probe: H has no DC component");
    HighpassCurve curve;
    Matrix acc = h;
    Matrix pw = h;
    double coef = 1.0;
    curve.r.push_back(spectral_split(acc).dc.norm() / base);
    for (int k = 1; k <= k_max; ++k) {
        pw = a_stochastic * pw;
        coef *= -a;
        acc += coef * pw;
        curve.r.push_back(spectral_split(acc).dc.norm() / base);
    }
    return curve;
}

DepthSweepResult depth_sweep(const Dataset& ds, Architecture kind, const std::vector<int>& depths,
                             const ParaFormerConfig& base, const TrainConfig& tc, int workers) {
    if (depths.empty()) throw ArgumentError("depth_sweep: no depths given");
    const GraphInputs in = GraphInputs::make(ds.features, ds.graph);
    auto results = run_parallel(depths.size(), workers, [&](std::size_t i) {
        ParaFormerConfig cfg = base;
        cfg.architecture = kind;
        if (kind == Architecture::paraformer) {
            cfg.K = depths[i];
            if (cfg.gamma_init == GammaInit::explicit_values) cfg.gamma_init = GammaInit::ppr;
        } else {
            cfg.num_layers = depths[i];
        }
        TrainResult r = train(in, ds.labels, ds.split, cfg, tc);
        const Matrix rep = node_forward(in, r.params, cfg).second;
        return std::vector<double>{r.report.test_accuracy, pairwise_l2(rep), cosine_sim(rep).value};
    });
    DepthSweepResult out;
    out.model_tag = to_string(kind);
    for (std::size_t i = 0; i < depths.size(); ++i)
        out.points.push_back({depths[i], results[i].at(0), results[i].at(1), results[i].at(2)});
    return out;
}

GammaSummary summarize_gamma(const std::vector<double>& gamma) {
    GammaSummary g;
    g.values = gamma;
    double head = 0.0;
    int head_n = 0;
    double tail = 0.0;
    int tail_n = 0;
    for (std::size_t k = 0; k < gamma.size(); ++k) {
        if (gamma[k] < 0.0) g.has_negative = true;
        if (k <= 3) {
            head += std::abs(gamma[k]);
            ++head_n;
        }
        if (k >= 10) {
            tail += std::abs(gamma[k]);
            ++tail_n;
        }
    }
    g.head_mean_abs = head_n > 0 ? head / head_n : 0.0;
    if (tail_n > 0) g.tail_mean_abs = tail / tail_n;
    return g;
}

GammaSummary gamma_report(const TrainReport& report) {
    return summarize_gamma(report.final_gamma);
}

void write_gamma_csv(const GammaSummary& g, const std::filesystem::path& file) {
    CsvTable t;
    t.header = {"k", "gamma", "abs_gamma", "sign"};
    for (std::size_t k = 0; k < g.values.size(); ++k) {
        const double v = g.values[k];
        t.add_row({std::to_string(k), format_number(v), format_number(std::abs(v)), v < 0 ? "-1" : (v > 0 ? "1" : "0")});
    }
    t.write(file);
}

double attention_approximation_gap(const Matrix& q, const Matrix& k, ScaleMode scale_mode) {
    const Matrix exact = dense_attention(q, k, Matrix::Zero(q.rows(), 1), scale_mode).attention;
    const Matrix approx = linear_attention_factors(q, k).materialize();
    return (exact - approx).norm() / exact.norm();
}

// ---------------------------------------------------------------------------
// Output

void CsvTable::add_row(std::vector<std::string> row) {
    if (!header.empty() && row.size() != header.size()) throw ArgumentError("CsvTable: row width differs from header");
    rows.push_back(std::move(row));
}

void CsvTable::write(const std::filesystem::path& file) const {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw Error("cannot write " + file.string());
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
        out << "\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
}

namespace {

std::string xml_escape(const std::string& s) {
    std::string o;
    for (char c : s) {
        switch (c) {
            case '<': o += "&lt;"; break;
            case '>': o += "&gt;"; break;
            case '&': o += "&amp;"; break;
            case '"': o += "&quot;"; break;
            default: o += c;
        }
    }
    return o;
}

std::string tick_label(double v) {
    std::ostringstream s;
    s.precision(3);
    s << v;
    return s.str();
}

std::vector<double> nice_ticks(double lo, double hi) {
    if (hi <= lo) return {lo};
    const double raw = (hi - lo) / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double f : {1.0, 2.0, 5.0, 10.0}) {
        step = f * mag;
        if (step >= raw) break;
    }
    std::vector<double> t;
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) t.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
    return t;
}

}  // namespace

void write_svg_chart(const std::filesystem::path& file, const std::vector<Series>& series, const ChartOptions& opt) {
    const double width = 720, height = 440, left = 80, right = 170, top = 40, bottom = 60;
    const double pw = width - left - right, ph = height - top - bottom;
    auto tx = [&](double v) { return opt.log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return opt.log_y ? std::log10(v) : v; };
    auto usable = [&](double x, double y) {
        return std::isfinite(x) && std::isfinite(y) && (!opt.log_x || x > 0) && (!opt.log_y || y > 0);
    };

    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!usable(s.x[i], s.y[i])) continue;
            x0 = std::min(x0, tx(s.x[i]));
            x1 = std::max(x1, tx(s.x[i]));
            y0 = std::min(y0, ty(s.y[i]));
            y1 = std::max(y1, ty(s.y[i]));
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double ypad = 0.05 * (y1 - y0);
    y0 -= ypad;
    y1 += ypad;
    auto px = [&](double v) { return left + (tx(v) - x0) / (x1 - x0) * pw; };
    auto py = [&](double v) { return top + ph - (ty(v) - y0) / (y1 - y0) * ph; };

    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << left + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(opt.title)
      << "</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";

    for (double t : nice_ticks(x0, x1)) {
        const double x = left + (t - x0) / (x1 - x0) * pw;
        o << "<line x1=\"" << x << "\" y1=\"" << top + ph << "\" x2=\"" << x << "\" y2=\"" << top + ph + 5
          << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << x << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
          << tick_label(opt.log_x ? std::pow(10.0, t) : t) << "</text>\n";
    }
    for (double t : nice_ticks(y0, y1)) {
        const double y = top + ph - (t - y0) / (y1 - y0) * ph;
        o << "<line x1=\"" << left - 5 << "\" y1=\"" << y << "\" x2=\"" << left + pw << "\" y2=\"" << y
          << "\" stroke=\"#dddddd\"/>\n";
        o << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
          << tick_label(opt.log_y ? std::pow(10.0, t) : t) << "</text>\n";
    }
    o << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 15 << "\" text-anchor=\"middle\">"
      << xml_escape(opt.x_label) << "</text>\n";
    o << "<text transform=\"translate(20," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << xml_escape(opt.y_label) << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = palette[s % (sizeof(palette) / sizeof(palette[0]))];
        std::ostringstream pts;
        for (std::size_t i = 0; i < series[s].x.size() && i < series[s].y.size(); ++i) {
            if (!usable(series[s].x[i], series[s].y[i])) continue;
            pts << px(series[s].x[i]) << "," << py(series[s].y[i]) << " ";
            o << "<circle cx=\"" << px(series[s].x[i]) << "\" cy=\"" << py(series[s].y[i]) << "\" r=\"3\" fill=\"" << color
              << "\"/>\n";
        }
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << pts.str() << "\"/>\n";
        const double ly = top + 10 + 20.0 * static_cast<double>(s);
        o << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 40 << "\" y2=\"" << ly
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << left + pw + 45 << "\" y=\"" << ly + 4 << "\">" << xml_escape(series[s].name) << "</text>\n";
    }
    o << "</svg>\n";

    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw Error("cannot write " + file.string());
    out << o.str();
}

std::string probe_file_stem(const std::string& probe, const std::string& dataset, const std::string& tag) {
    return probe + "_" + dataset + "_" + tag;
}

void write_depth_sweep_csv(const std::vector<DepthSweepResult>& results, const std::filesystem::path& file) {
    CsvTable t;
    t.header = {"model", "depth", "test_acc", "d_l2", "s_cos"};
    for (const auto& r : results)
        for (const auto& p : r.points)
            t.add_row({r.model_tag, std::to_string(p.depth), format_number(p.test_acc), format_number(p.d_l2),
                       format_number(p.s_cos)});
    t.write(file);
}

}  // namespace paraformer
