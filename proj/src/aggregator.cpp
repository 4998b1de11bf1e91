#include "mslide/aggregator.hpp"

#include "mslide/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace mslide {

Checkpoint zero_params(std::size_t dim) {
    Checkpoint p;
    p.add(param::kWIn, Matrix(dim, dim));
    p.add(param::kBIn, Matrix(dim, 1));
    p.add(param::kWA, Matrix(dim, 1));
    p.add(param::kWOut, Matrix(dim, dim));
    p.add(param::kBOut, Matrix(dim, 1));
    return p;
}

Checkpoint make_base_params(std::size_t dim, double perturbation, std::uint64_t seed) {
    Checkpoint                       p = zero_params(dim);
    std::mt19937_64                  rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double                     s = perturbation / std::sqrt(static_cast<double>(dim));
    for (const char* name : {param::kWIn, param::kWOut}) {
        Matrix& w = p.at(name);
        for (std::size_t i = 0; i < dim; ++i) {
            for (std::size_t j = 0; j < dim; ++j) {
                w(i, j) = (i == j ? 1.0 : 0.0) + s * normal(rng);
            }
        }
    }
    for (double& x : p.at(param::kWA).values()) {
        x = normal(rng) / std::sqrt(static_cast<double>(dim));
    }
    p.set_meta("kind", "aggregator");
    p.set_meta("dim", std::to_string(dim));
    return p;
}

void check_params(const Checkpoint& params, std::size_t dim) {
    static constexpr const char* kNames[] = {param::kWIn, param::kBIn, param::kWA, param::kWOut, param::kBOut};
    static constexpr bool        kSquare[] = {true, false, false, true, false};
    bool ok = params.size() == 5;
    for (std::size_t i = 0; ok && i < 5; ++i) {
        const auto& [name, m] = params.entries()[i];
        ok = name == kNames[i] && m.rows() == dim && m.cols() == (kSquare[i] ? dim : 1);
    }
    if (!ok) {
        std::string why;
        shape_compatible(params, zero_params(dim), &why);
        throw Error(ErrorCode::Shape, fmt::format("aggregator parameters do not match dimension {}: {}", dim, why));
    }
}

namespace {

struct View {
    const Matrix& w_in;
    const Matrix& b_in;
    const Matrix& w_a;
    const Matrix& w_out;
    const Matrix& b_out;

    explicit View(const Checkpoint& p)
        : w_in(p.entries()[0].second), b_in(p.entries()[1].second), w_a(p.entries()[2].second),
          w_out(p.entries()[3].second), b_out(p.entries()[4].second) {}
};

struct Cache {
    Matrix              h;      // n x d
    std::vector<double> attn;   // n
    std::vector<double> pooled; // d
    std::vector<double> z;      // d
};

void check_patches(const Matrix& patches, std::size_t dim) {
    if (patches.cols() != dim) {
        throw Error(ErrorCode::Shape, fmt::format("bag patches are {} wide, aggregator expects {}", patches.cols(), dim));
    }
}

Cache run_forward(const Matrix& v, const View& p) {
    const std::size_t n = v.rows();
    const std::size_t d = p.w_in.rows();
    Cache             c{Matrix(n, d), std::vector<double>(n), std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};

    for (std::size_t r = 0; r < n; ++r) {
        auto h = c.h.row(r);
        for (std::size_t j = 0; j < d; ++j) {
            h[j] = p.b_in(j, 0);
        }
        const auto in = v.row(r);
        for (std::size_t k = 0; k < d; ++k) {
            const double x  = in[k];
            const auto   wk = p.w_in.row(k);
            for (std::size_t j = 0; j < d; ++j) {
                h[j] += x * wk[j];
            }
        }
        double score = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            h[j] = std::tanh(h[j]);
            score += h[j] * p.w_a(j, 0);
        }
        c.attn[r] = score;
    }
    const double top = *std::max_element(c.attn.begin(), c.attn.end());
    double       den = 0.0;
    for (double& s : c.attn) {
        s = std::exp(s - top);
        den += s;
    }
    for (double& s : c.attn) {
        s /= den;
    }
    for (std::size_t r = 0; r < n; ++r) {
        const auto h = c.h.row(r);
        for (std::size_t j = 0; j < d; ++j) {
            c.pooled[j] += c.attn[r] * h[j];
        }
    }
    for (std::size_t j = 0; j < d; ++j) {
        c.z[j] = p.b_out(j, 0);
    }
    for (std::size_t k = 0; k < d; ++k) {
        const auto wk = p.w_out.row(k);
        for (std::size_t j = 0; j < d; ++j) {
            c.z[j] += c.pooled[k] * wk[j];
        }
    }
    return c;
}

// Returns logits and, for normalize mode, the norms needed by the backward pass.
std::vector<double> logits_of(const std::vector<double>& z, const Matrix& e, bool normalize, double& z_norm) {
    z_norm = 0.0;
    for (double x : z) {
        z_norm += x * x;
    }
    z_norm = std::sqrt(z_norm);
    std::vector<double> out(e.rows());
    for (std::size_t c = 0; c < e.rows(); ++c) {
        const auto row = e.row(c);
        double     s   = 0.0;
        double     en  = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j) {
            s += z[j] * row[j];
            en += row[j] * row[j];
        }
        if (normalize) {
            en = std::sqrt(en);
            s  = (z_norm > 0.0 && en > 0.0) ? s / (z_norm * en) : 0.0;
        }
        out[c] = s;
    }
    return out;
}

// log-softmax at `label`, plus softmax probabilities.
double cross_entropy(const std::vector<double>& logits, std::size_t label, std::vector<double>& probs) {
    const double top = *std::max_element(logits.begin(), logits.end());
    double       den = 0.0;
    probs.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - top);
        den += probs[i];
    }
    for (double& q : probs) {
        q /= den;
    }
    return -(logits[label] - top - std::log(den));
}

void check_label(const Bag& bag, const Matrix& class_embeddings) {
    if (bag.label >= class_embeddings.rows()) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("label {} out of range for {} classes", bag.label, class_embeddings.rows()));
    }
}

} // namespace

Matrix forward(const Matrix& patches, const Checkpoint& params) {
    check_params(params, patches.cols());
    const View p(params);
    check_patches(patches, p.w_in.rows());
    const Cache c = run_forward(patches, p);
    return Matrix::row_vector(c.z);
}

double bag_loss(const Bag& bag, const Checkpoint& params, const Matrix& class_embeddings, bool normalize) {
    check_label(bag, class_embeddings);
    check_params(params, bag.patches.cols());
    const View p(params);
    const Cache         c = run_forward(bag.patches, p);
    double              z_norm = 0.0;
    std::vector<double> probs;
    return cross_entropy(logits_of(c.z, class_embeddings, normalize, z_norm), bag.label, probs);
}

LossAndGrads loss_and_grads(const Bag& bag, const Checkpoint& params, const Matrix& class_embeddings, bool normalize) {
    check_label(bag, class_embeddings);
    check_params(params, bag.patches.cols());
    const View p(params);
    const std::size_t d = p.w_in.rows();
    if (class_embeddings.cols() != d) {
        throw Error(ErrorCode::Shape, fmt::format("class embeddings are {} wide, aggregator expects {}", class_embeddings.cols(), d));
    }
    const Matrix&     v = bag.patches;
    const std::size_t n = v.rows();
    const Cache       c = run_forward(v, p);

    double              z_norm = 0.0;
    std::vector<double> probs;
    LossAndGrads        out;
    out.loss  = cross_entropy(logits_of(c.z, class_embeddings, normalize, z_norm), bag.label, probs);
    out.grads = zero_params(d);
    Matrix& g_w_in  = out.grads.entries()[0].second;
    Matrix& g_b_in  = out.grads.entries()[1].second;
    Matrix& g_w_a   = out.grads.entries()[2].second;
    Matrix& g_w_out = out.grads.entries()[3].second;
    Matrix& g_b_out = out.grads.entries()[4].second;

    // dL/dlogit = softmax - onehot
    std::vector<double> dl = probs;
    dl[bag.label] -= 1.0;

    std::vector<double> dz(d, 0.0);
    if (!normalize) {
        for (std::size_t k = 0; k < class_embeddings.rows(); ++k) {
            const auto e = class_embeddings.row(k);
            for (std::size_t j = 0; j < d; ++j) {
                dz[j] += dl[k] * e[j];
            }
        }
    } else if (z_norm > 0.0) {
        std::vector<double> dzhat(d, 0.0);
        for (std::size_t k = 0; k < class_embeddings.rows(); ++k) {
            const auto e  = class_embeddings.row(k);
            double     en = 0.0;
            for (double x : e) {
                en += x * x;
            }
            en = std::sqrt(en);
            if (en == 0.0) {
                continue;
            }
            for (std::size_t j = 0; j < d; ++j) {
                dzhat[j] += dl[k] * e[j] / en;
            }
        }
        double radial = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            radial += dzhat[j] * c.z[j] / z_norm;
        }
        for (std::size_t j = 0; j < d; ++j) {
            dz[j] = (dzhat[j] - radial * c.z[j] / z_norm) / z_norm;
        }
    }

    // Z = pooled W_out + b_out
    std::vector<double> dpooled(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
        g_b_out(k, 0) = dz[k];
        auto         gw = g_w_out.row(k);
        const auto   w  = p.w_out.row(k);
        double       acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            gw[j] = c.pooled[k] * dz[j];
            acc += w[j] * dz[j];
        }
        dpooled[k] = acc;
    }

    // pooled = sum_r a_r h_r, a = softmax(s), s_r = h_r . w_a
    std::vector<double> da(n);
    double              mean_da = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const auto h   = c.h.row(r);
        double     acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            acc += h[j] * dpooled[j];
        }
        da[r] = acc;
        mean_da += c.attn[r] * acc;
    }
    Matrix du(n, d);
    for (std::size_t r = 0; r < n; ++r) {
        const double ds = c.attn[r] * (da[r] - mean_da);
        const auto   h  = c.h.row(r);
        auto         u  = du.row(r);
        for (std::size_t j = 0; j < d; ++j) {
            g_w_a(j, 0) += ds * h[j];
            const double dh = c.attn[r] * dpooled[j] + ds * p.w_a(j, 0);
            u[j]            = dh * (1.0 - h[j] * h[j]);
        }
    }

    // u = V W_in + b_in
    for (std::size_t r = 0; r < n; ++r) {
        const auto u  = du.row(r);
        const auto in = v.row(r);
        for (std::size_t k = 0; k < d; ++k) {
            const double x  = in[k];
            auto         gw = g_w_in.row(k);
            for (std::size_t j = 0; j < d; ++j) {
                gw[j] += x * u[j];
            }
        }
        for (std::size_t j = 0; j < d; ++j) {
            g_b_in(j, 0) += u[j];
        }
    }
    return out;
}

Bag subsample(const Bag& bag, std::size_t k, std::mt19937_64& rng) {
    if (k == 0) {
        throw Error(ErrorCode::InvalidArgument, "subsample: k must be at least 1");
    }
    const std::size_t n = bag.patches.rows();
    if (n <= k) {
        return bag;
    }
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> pick;
    pick.reserve(k);
    std::sample(all.begin(), all.end(), std::back_inserter(pick), k, rng);
    Bag out{Matrix(k, bag.patches.cols()), bag.label, bag.task_id, bag.site_id};
    for (std::size_t i = 0; i < k; ++i) {
        std::copy_n(bag.patches.row(pick[i]).begin(), bag.patches.cols(), out.patches.row(i).begin());
    }
    return out;
}

TrainResult train_task(std::span<const Bag> train_bags, const Checkpoint& init, const Matrix& class_embeddings,
                       const TrainHyper& hyper, std::mt19937_64& rng, const BagReadHook& on_read) {
    if (train_bags.empty()) {
        throw Error(ErrorCode::InvalidArgument, "train_task: empty training set");
    }
    const auto start = std::chrono::steady_clock::now();
    check_params(init, class_embeddings.cols());

    TrainResult out{init, {}, 0.0};
    Checkpoint  m1 = zero_params(class_embeddings.cols());
    Checkpoint  m2 = zero_params(class_embeddings.cols());

    std::vector<std::size_t> order(train_bags.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t idx : order) {
            if (on_read) {
                on_read(idx);
            }
            const Bag          bag = subsample(train_bags[idx], hyper.k, rng);
            const LossAndGrads lg  = loss_and_grads(bag, out.params, class_embeddings, hyper.normalize);
            if (!std::isfinite(lg.loss)) {
                throw Error(ErrorCode::NonFinite, fmt::format("train_task: non-finite loss at epoch {} bag {} (label {})", epoch, idx, bag.label));
            }
            total += lg.loss;
            ++step;
            const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
            for (std::size_t e = 0; e < out.params.size(); ++e) {
                auto       w = out.params.entries()[e].second.values();
                const auto g = lg.grads.entries()[e].second.values();
                auto       a = m1.entries()[e].second.values();
                auto       b = m2.entries()[e].second.values();
                for (std::size_t i = 0; i < w.size(); ++i) {
                    w[i] *= 1.0 - hyper.lr * hyper.weight_decay;
                    a[i] = hyper.beta1 * a[i] + (1.0 - hyper.beta1) * g[i];
                    b[i] = hyper.beta2 * b[i] + (1.0 - hyper.beta2) * g[i] * g[i];
                    w[i] -= hyper.lr * (a[i] / bc1) / (std::sqrt(b[i] / bc2) + hyper.eps);
                }
            }
        }
        out.history.push_back(total / static_cast<double>(train_bags.size()));
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

} // namespace mslide
