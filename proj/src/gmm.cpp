#include "grade/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <spdlog/spdlog.h>

#include "grade/errors.hpp"

namespace grade {

namespace {

constexpr double kMinComponentMass = 1e-8;

double log_sum_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

double squared_distance(const Point& a, const Point& b) {
    double s = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return s;
}

Point global_variance(const Points& data, double floor) {
    const std::size_t dim = data.front().size();
    Point mean(dim, 0.0), var(dim, 0.0);
    for (const auto& x : data)
        for (std::size_t d = 0; d < dim; ++d) mean[d] += x[d];
    for (auto& m : mean) m /= static_cast<double>(data.size());
    for (const auto& x : data)
        for (std::size_t d = 0; d < dim; ++d) var[d] += (x[d] - mean[d]) * (x[d] - mean[d]);
    for (auto& v : var) v = std::max(v / static_cast<double>(data.size()), floor);
    return var;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Points kmeans_pp_seeds(const Points& data, std::size_t k, std::mt19937_64& rng) {
    const std::size_t n = data.size();
    Points centers;
    centers.push_back(data[rng() % n]);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    while (centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(data[i], centers.back()));
            total += d2[i];
        }
        std::size_t pick = n - 1;
        if (total <= 0.0) {
            pick = rng() % n;
        } else {
            double target = uniform01(rng) * total;
            for (std::size_t i = 0; i < n; ++i) {
                target -= d2[i];
                if (target < 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        centers.push_back(data[pick]);
    }
    return centers;
}

void validate_points(const Points& data) {
    if (data.empty()) throw Error("gmm: no data");
    const std::size_t dim = data.front().size();
    if (dim == 0) throw Error("gmm: zero-dimensional data");
    for (const auto& x : data)
        if (x.size() != dim) throw Error("gmm: inconsistent dimensions");
}

}  // namespace

std::vector<double> component_log_joint(const GmmModel& model, const Point& x) {
    static const double kLog2Pi = std::log(2.0 * std::numbers::pi);
    std::vector<double> out(model.k);
    for (std::size_t j = 0; j < model.k; ++j) {
        double lp = 0.0;
        for (std::size_t d = 0; d < model.dim; ++d) {
            const double v = model.variances[j][d];
            const double diff = x[d] - model.means[j][d];
            lp += kLog2Pi + std::log(v) + diff * diff / v;
        }
        out[j] = std::log(model.weights[j]) - 0.5 * lp;
    }
    return out;
}

Points responsibilities(const GmmModel& model, const Points& data) {
    Points out;
    out.reserve(data.size());
    for (const auto& x : data) {
        auto lj = component_log_joint(model, x);
        const double lse = log_sum_exp(lj);
        for (auto& v : lj) v = std::exp(v - lse);
        out.push_back(std::move(lj));
    }
    return out;
}

double log_likelihood(const GmmModel& model, const Points& data) {
    double ll = 0.0;
    for (const auto& x : data) ll += log_sum_exp(component_log_joint(model, x));
    return ll;
}

GmmModel fit_gmm(const Points& data, const GmmOptions& options) {
    validate_points(data);
    if (options.k < 1) throw Error("gmm: k must be >= 1");
    if (data.size() < options.k) throw Error("gmm: fewer points than components");
    const std::size_t n = data.size();
    const std::size_t dim = data.front().size();

    std::mt19937_64 rng(options.seed);
    const Point base_var = global_variance(data, options.variance_floor);

    GmmModel m;
    m.k = options.k;
    m.dim = dim;
    m.means = kmeans_pp_seeds(data, options.k, rng);
    m.variances.assign(options.k, base_var);
    m.weights.assign(options.k, 1.0 / static_cast<double>(options.k));

    Points resp(n, Point(options.k));
    std::vector<double> point_ll(n);
    for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
        // E-step
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            auto lj = component_log_joint(m, data[i]);
            const double lse = log_sum_exp(lj);
            for (std::size_t j = 0; j < m.k; ++j) resp[i][j] = std::exp(lj[j] - lse);
            point_ll[i] = lse;
            ll += lse;
        }
        m.log_likelihood_trace.push_back(ll);
        m.iterations = iter + 1;
        const auto& trace = m.log_likelihood_trace;
        if (trace.size() >= 2 && trace.back() - trace[trace.size() - 2] < options.tol) {
            m.converged = true;
            break;
        }
        if (iter + 1 == options.max_iters) break;

        // M-step
        bool reseeded = false;
        for (std::size_t j = 0; j < m.k; ++j) {
            double mass = 0.0;
            for (std::size_t i = 0; i < n; ++i) mass += resp[i][j];
            if (mass < kMinComponentMass) {
                // Re-seed at the worst-explained point.
                const auto worst = static_cast<std::size_t>(
                    std::min_element(point_ll.begin(), point_ll.end()) - point_ll.begin());
                spdlog::info("gmm: component {} collapsed (mass {:.3g}); re-seeding at point {}", j, mass, worst);
                m.means[j] = data[worst];
                m.variances[j] = base_var;
                m.weights[j] = 1.0 / static_cast<double>(n);
                ++m.reinitializations;
                reseeded = true;
                continue;
            }
            m.weights[j] = mass / static_cast<double>(n);
            Point mean(dim, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t d = 0; d < dim; ++d) mean[d] += resp[i][j] * data[i][d];
            for (auto& v : mean) v /= mass;
            Point var(dim, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t d = 0; d < dim; ++d) {
                    const double diff = data[i][d] - mean[d];
                    var[d] += resp[i][j] * diff * diff;
                }
            for (auto& v : var) v = std::max(v / mass, options.variance_floor);
            m.means[j] = std::move(mean);
            m.variances[j] = std::move(var);
        }
        if (reseeded) {
            double total = 0.0;
            for (double w : m.weights) total += w;
            for (auto& w : m.weights) w /= total;
            m.log_likelihood_trace.clear();
        }
    }
    return m;
}

double bic(const GmmModel& model, const Points& data) {
    const double params = static_cast<double>(model.k * 2 * model.dim + (model.k - 1));
    return -2.0 * log_likelihood(model, data) + params * std::log(static_cast<double>(data.size()));
}

std::size_t select_k_bic(const Points& data, std::size_t k_min, std::size_t k_max, const GmmOptions& base) {
    k_min = std::max<std::size_t>(1, k_min);
    k_max = std::min(k_max, data.size());
    if (k_min > k_max) throw Error("select_k_bic: empty k range");
    std::size_t best_k = k_min;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = k_min; k <= k_max; ++k) {
        auto opts = base;
        opts.k = k;
        const double score = bic(fit_gmm(data, opts), data);
        if (score < best) {
            best = score;
            best_k = k;
        }
    }
    return best_k;
}

std::size_t default_k(std::size_t n) {
    if (n == 0) return 1;
    const std::size_t k = std::clamp<std::size_t>((n + 19) / 20, 2, 64);
    return std::max<std::size_t>(1, std::min(k, n));
}

std::vector<ClusterAssignment> assign(const GmmModel& model, const Points& data, const std::vector<std::string>& ids,
                                      double tau) {
    if (ids.size() != data.size()) throw Error("assign: ids and data differ in length");
    auto resp = responsibilities(model, data);
    std::vector<ClusterAssignment> out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        ClusterAssignment a;
        a.claim_id = ids[i];
        const auto argmax =
            static_cast<std::size_t>(std::max_element(resp[i].begin(), resp[i].end()) - resp[i].begin());
        for (std::size_t j = 0; j < model.k; ++j)
            if (j == argmax || resp[i][j] >= tau) a.memberships.push_back(j);
        a.responsibilities = std::move(resp[i]);
        out.push_back(std::move(a));
    }
    return out;
}

Points to_points(const std::vector<std::vector<float>>& vectors) {
    Points out;
    out.reserve(vectors.size());
    for (const auto& v : vectors) out.emplace_back(v.begin(), v.end());
    return out;
}

void to_json(json& j, const GmmModel& m) {
    j = json{{"k", m.k},
             {"dim", m.dim},
             {"weights", m.weights},
             {"means", m.means},
             {"variances", m.variances},
             {"log_likelihood_trace", m.log_likelihood_trace},
             {"iterations", m.iterations},
             {"reinitializations", m.reinitializations},
             {"converged", m.converged}};
}

void from_json(const json& j, GmmModel& m) {
    m.k = j.at("k").get<std::size_t>();
    m.dim = j.at("dim").get<std::size_t>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.means = j.at("means").get<Points>();
    m.variances = j.at("variances").get<Points>();
    m.log_likelihood_trace = j.value("log_likelihood_trace", std::vector<double>{});
    m.iterations = j.value("iterations", std::size_t{0});
    m.reinitializations = j.value("reinitializations", std::size_t{0});
    m.converged = j.value("converged", false);
}

void to_json(json& j, const ClusterAssignment& a) {
    j = json{{"claim_id", a.claim_id}, {"responsibilities", a.responsibilities}, {"memberships", a.memberships}};
}

void from_json(const json& j, ClusterAssignment& a) {
    a.claim_id = j.at("claim_id").get<std::string>();
    a.responsibilities = j.at("responsibilities").get<std::vector<double>>();
    a.memberships = j.at("memberships").get<std::vector<std::size_t>>();
}

}  // namespace grade
