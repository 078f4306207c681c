#include "trajsim/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <memory>
#include <cmath>
#include <numbers>
#include <string>

#include "trajsim/error.hpp"

namespace trajsim {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const MatR>;
using MMap = Eigen::Map<MatR>;

CMap view(const Tensor& t) { return CMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())); }
MMap view(Tensor& t) { return MMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())); }

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": shapes " + a.shape_string() + " and " + b.shape_string() +
                     " are not conformable");
}

void require_same_graph(Var a, Var b, const char* op) {
    if (&a.graph() != &b.graph()) {
        throw std::invalid_argument(std::string(op) + ": operands belong to different graphs");
    }
}

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd f, Deriv df) {
    Graph& g = a.graph();
    const Tensor& x = a.value();
    Tensor y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = f(x[i]);
    }
    const std::size_t pa = a.id();
    return g.push(std::move(y), {pa}, [pa, df](Graph& g, std::size_t self) {
        const Tensor& x = g.value(pa);
        const Tensor& y = g.value(self);
        const Tensor& gy = g.grad_of(self);
        Tensor& gx = g.grad_accum(pa);
        for (std::size_t i = 0; i < x.size(); ++i) {
            gx[i] += gy[i] * df(x[i], y[i]);
        }
    });
}

}  // namespace

const Tensor& Var::value() const { return graph_->value(id_); }

Var Graph::push(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                  [&](std::size_t p) { return nodes_[p].requires_grad; });
    n.parents = std::move(parents);
    if (n.requires_grad) {
        n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) { return push(std::move(value), {}, nullptr); }

Var Graph::variable(Tensor value) {
    Var v = push(std::move(value), {}, nullptr);
    nodes_.back().requires_grad = true;
    return v;
}

Var Graph::param(const ParamStore& store, std::size_t index) {
    Node n;
    n.external = &store.value(index);
    n.requires_grad = true;
    n.param_index = static_cast<std::ptrdiff_t>(index);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Graph::param(const ParamStore& store, std::string_view name) { return param(store, store.index(name)); }

const Tensor& Graph::value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
}

Tensor Graph::grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.size() == 0) {
        const Tensor& x = value(v.id());
        return Tensor(x.shape(), 0.0);
    }
    return n.grad;
}

Tensor& Graph::grad_accum(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) {
        const Tensor& x = value(id);
        n.grad = Tensor(x.shape(), 0.0);
    }
    return n.grad;
}

void Graph::backward(Var loss) {
    const Tensor& v = value(loss.id());
    if (v.size() != 1) {
        throw ShapeError("backward: loss must be 1x1, got " + v.shape_string());
    }
    backward(loss, Tensor(v.shape(), 1.0));
}

void Graph::backward(Var out, const Tensor& seed) {
    if (seed.size() != value(out.id()).size()) {
        shape_error("backward seed", value(out.id()), seed);
    }
    for (auto& n : nodes_) {
        n.grad = Tensor();
    }
    nodes_[out.id()].grad = Tensor(value(out.id()).shape(), 0.0);
    nodes_[out.id()].grad += seed;
    for (std::size_t id = out.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.requires_grad || n.grad.size() == 0 || !n.backward) {
            continue;
        }
        n.backward(*this, id);
    }
}

void Graph::accumulate_param_grads(Gradients& into) const {
    for (const auto& n : nodes_) {
        if (n.param_index >= 0 && n.grad.size() != 0) {
            into.add(static_cast<std::size_t>(n.param_index), n.grad);
        }
    }
}

namespace ad {

Var matmul(Var a, Var b) {
    require_same_graph(a, b, "matmul");
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.cols() != y.rows()) {
        shape_error("matmul", x, y);
    }
    Tensor out(x.rows(), y.cols());
    view(out).noalias() = view(x) * view(y);
    const std::size_t pa = a.id();
    const std::size_t pb = b.id();
    return a.graph().push(std::move(out), {pa, pb}, [pa, pb](Graph& g, std::size_t self) {
        const auto gy = view(g.grad_of(self));
        if (g.requires_grad(pa)) {
            view(g.grad_accum(pa)).noalias() += gy * view(g.value(pb)).transpose();
        }
        if (g.requires_grad(pb)) {
            view(g.grad_accum(pb)).noalias() += view(g.value(pa)).transpose() * gy;
        }
    });
}

Var matmul_nt(Var a, Var b) {
    require_same_graph(a, b, "matmul_nt");
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.cols() != y.cols()) {
        shape_error("matmul_nt", x, y);
    }
    Tensor out(x.rows(), y.rows());
    view(out).noalias() = view(x) * view(y).transpose();
    const std::size_t pa = a.id();
    const std::size_t pb = b.id();
    return a.graph().push(std::move(out), {pa, pb}, [pa, pb](Graph& g, std::size_t self) {
        const auto gy = view(g.grad_of(self));
        if (g.requires_grad(pa)) {
            view(g.grad_accum(pa)).noalias() += gy * view(g.value(pb));
        }
        if (g.requires_grad(pb)) {
            view(g.grad_accum(pb)).noalias() += gy.transpose() * view(g.value(pa));
        }
    });
}

namespace {

Var add_scaled(Var a, Var b, double sb, const char* op) {
    require_same_graph(a, b, op);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
        shape_error(op, x, y);
    }
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] + sb * y[i];
    }
    const std::size_t pa = a.id();
    const std::size_t pb = b.id();
    return a.graph().push(std::move(out), {pa, pb}, [pa, pb, sb](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad_of(self);
        if (g.requires_grad(pa)) {
            g.grad_accum(pa) += gy;
        }
        if (g.requires_grad(pb)) {
            Tensor& gb = g.grad_accum(pb);
            for (std::size_t i = 0; i < gy.size(); ++i) {
                gb[i] += sb * gy[i];
            }
        }
    });
}

}  // namespace

Var add(Var a, Var b) { return add_scaled(a, b, 1.0, "add"); }
Var sub(Var a, Var b) { return add_scaled(a, b, -1.0, "sub"); }

Var add_row(Var a, Var row) {
    require_same_graph(a, row, "add_row");
    const Tensor& x = a.value();
    const Tensor& r = row.value();
    if (r.rows() != 1 || r.cols() != x.cols()) {
        shape_error("add_row", x, r);
    }
    Tensor out(x.rows(), x.cols());
    view(out) = view(x).rowwise() + view(r).row(0);
    const std::size_t pa = a.id();
    const std::size_t pr = row.id();
    return a.graph().push(std::move(out), {pa, pr}, [pa, pr](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad_of(self);
        if (g.requires_grad(pa)) {
            g.grad_accum(pa) += gy;
        }
        if (g.requires_grad(pr)) {
            view(g.grad_accum(pr)).row(0) += view(gy).colwise().sum();
        }
    });
}

Var mul(Var a, Var b) {
    require_same_graph(a, b, "mul");
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
        shape_error("mul", x, y);
    }
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] * y[i];
    }
    const std::size_t pa = a.id();
    const std::size_t pb = b.id();
    return a.graph().push(std::move(out), {pa, pb}, [pa, pb](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad_of(self);
        if (g.requires_grad(pa)) {
            Tensor& ga = g.grad_accum(pa);
            const Tensor& y = g.value(pb);
            for (std::size_t i = 0; i < gy.size(); ++i) {
                ga[i] += gy[i] * y[i];
            }
        }
        if (g.requires_grad(pb)) {
            Tensor& gb = g.grad_accum(pb);
            const Tensor& x = g.value(pa);
            for (std::size_t i = 0; i < gy.size(); ++i) {
                gb[i] += gy[i] * x[i];
            }
        }
    });
}

Var scale(Var a, double c) {
    return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var scale_by(Var a, Var s) {
    require_same_graph(a, s, "scale_by");
    const Tensor& x = a.value();
    if (s.value().size() != 1) {
        shape_error("scale_by", x, s.value());
    }
    const double k = s.value()[0];
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = k * x[i];
    }
    const std::size_t pa = a.id();
    const std::size_t ps = s.id();
    return a.graph().push(std::move(out), {pa, ps}, [pa, ps](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad_of(self);
        const Tensor& x = g.value(pa);
        const double k = g.value(ps)[0];
        if (g.requires_grad(pa)) {
            Tensor& ga = g.grad_accum(pa);
            for (std::size_t i = 0; i < gy.size(); ++i) {
                ga[i] += k * gy[i];
            }
        }
        if (g.requires_grad(ps)) {
            double acc = 0.0;
            for (std::size_t i = 0; i < gy.size(); ++i) {
                acc += gy[i] * x[i];
            }
            g.grad_accum(ps)[0] += acc;
        }
    });
}

Var exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var sigmoid(Var a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0.0) {
                return 1.0 / (1.0 + std::exp(-x));
            }
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var gelu(Var a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    return unary(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [](double x, double) {
            return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
        });
}

Var softmax_rows(Var a) {
    const Tensor& x = a.value();
    Tensor y(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double mx = x(r, 0);
        for (std::size_t c = 1; c < x.cols(); ++c) {
            mx = std::max(mx, x(r, c));
        }
        double z = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            y(r, c) = std::exp(x(r, c) - mx);
            z += y(r, c);
        }
        for (std::size_t c = 0; c < x.cols(); ++c) {
            y(r, c) /= z;
        }
    }
    const std::size_t pa = a.id();
    return a.graph().push(std::move(y), {pa}, [pa](Graph& g, std::size_t self) {
        const Tensor& y = g.value(self);
        const Tensor& gy = g.grad_of(self);
        Tensor& gx = g.grad_accum(pa);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < y.cols(); ++c) {
                dot += gy(r, c) * y(r, c);
            }
            for (std::size_t c = 0; c < y.cols(); ++c) {
                gx(r, c) += y(r, c) * (gy(r, c) - dot);
            }
        }
    });
}

Var log_softmax_rows(Var a) {
    const Tensor& x = a.value();
    Tensor y(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double mx = x(r, 0);
        for (std::size_t c = 1; c < x.cols(); ++c) {
            mx = std::max(mx, x(r, c));
        }
        double z = 0.0;
        for (std::size_t c = 0; c < x.cols(); ++c) {
            z += std::exp(x(r, c) - mx);
        }
        const double lse = mx + std::log(z);
        for (std::size_t c = 0; c < x.cols(); ++c) {
            y(r, c) = x(r, c) - lse;
        }
    }
    const std::size_t pa = a.id();
    return a.graph().push(std::move(y), {pa}, [pa](Graph& g, std::size_t self) {
        const Tensor& y = g.value(self);
        const Tensor& gy = g.grad_of(self);
        Tensor& gx = g.grad_accum(pa);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            double total = 0.0;
            for (std::size_t c = 0; c < y.cols(); ++c) {
                total += gy(r, c);
            }
            for (std::size_t c = 0; c < y.cols(); ++c) {
                gx(r, c) += gy(r, c) - std::exp(y(r, c)) * total;
            }
        }
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    require_same_graph(x, gain, "layer_norm");
    require_same_graph(x, bias, "layer_norm");
    const Tensor& in = x.value();
    const std::size_t n = in.rows();
    const std::size_t d = in.cols();
    if (d < 2) {
        throw ShapeError("layer_norm: need at least 2 columns, got " + in.shape_string());
    }
    if (gain.value().size() != d || bias.value().size() != d) {
        shape_error("layer_norm", in, gain.value());
    }
    // Normalized values and per-row inverse std are kept for backward.
    auto xhat = std::make_shared<Tensor>(n, d);
    auto inv_std = std::make_shared<std::vector<double>>(n);
    Tensor out(n, d);
    const Tensor& gv = gain.value();
    const Tensor& bv = bias.value();
    for (std::size_t r = 0; r < n; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            mu += in(r, c);
        }
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double t = in(r, c) - mu;
            var += t * t;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t c = 0; c < d; ++c) {
            const double h = (in(r, c) - mu) * is;
            (*xhat)(r, c) = h;
            out(r, c) = gv[c] * h + bv[c];
        }
    }
    const std::size_t px = x.id();
    const std::size_t pg = gain.id();
    const std::size_t pb = bias.id();
    return x.graph().push(std::move(out), {px, pg, pb}, [px, pg, pb, xhat, inv_std](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad_of(self);
        const Tensor& gv = g.value(pg);
        const std::size_t n = gy.rows();
        const std::size_t d = gy.cols();
        if (g.requires_grad(pg)) {
            Tensor& gg = g.grad_accum(pg);
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < d; ++c) {
                    gg[c] += gy(r, c) * (*xhat)(r, c);
                }
            }
        }
        if (g.requires_grad(pb)) {
            Tensor& gb = g.grad_accum(pb);
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < d; ++c) {
                    gb[c] += gy(r, c);
                }
            }
        }
        if (g.requires_grad(px)) {
            Tensor& gx = g.grad_accum(px);
            const double inv_d = 1.0 / static_cast<double>(d);
            for (std::size_t r = 0; r < n; ++r) {
                double mean_dh = 0.0;
                double mean_dh_h = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double dh = gy(r, c) * gv[c];
                    mean_dh += dh;
                    mean_dh_h += dh * (*xhat)(r, c);
                }
                mean_dh *= inv_d;
                mean_dh_h *= inv_d;
                for (std::size_t c = 0; c < d; ++c) {
                    const double dh = gy(r, c) * gv[c];
                    gx(r, c) += (*inv_std)[r] * (dh - mean_dh - (*xhat)(r, c) * mean_dh_h);
                }
            }
        }
    });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
    const Tensor& x = a.value();
    if (start + count > x.cols() || count == 0) {
        throw ShapeError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) + ") out of " +
                         x.shape_string());
    }
    Tensor out(x.rows(), count);
    view(out) = view(x).middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count));
    const std::size_t pa = a.id();
    return a.graph().push(std::move(out), {pa}, [pa, start, count](Graph& g, std::size_t self) {
        view(g.grad_accum(pa)).middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) +=
            view(g.grad_of(self));
    });
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
    const Tensor& x = a.value();
    if (start + count > x.rows() || count == 0) {
        throw ShapeError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) + ") out of " +
                         x.shape_string());
    }
    Tensor out(count, x.cols());
    std::copy_n(x.data() + start * x.cols(), count * x.cols(), out.data());
    const std::size_t pa = a.id();
    return a.graph().push(std::move(out), {pa}, [pa, start](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad_of(self);
        Tensor& gx = g.grad_accum(pa);
        const std::size_t offset = start * gy.cols();
        for (std::size_t i = 0; i < gy.size(); ++i) {
            gx[offset + i] += gy[i];
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) {
        throw ShapeError("concat_cols: no inputs");
    }
    const std::size_t rows = parts[0].rows();
    std::size_t cols = 0;
    std::vector<std::size_t> ids;
    for (const Var& p : parts) {
        require_same_graph(parts[0], p, "concat_cols");
        if (p.rows() != rows) {
            shape_error("concat_cols", parts[0].value(), p.value());
        }
        cols += p.cols();
        ids.push_back(p.id());
    }
    Tensor out(rows, cols);
    std::size_t offset = 0;
    for (const Var& p : parts) {
        view(out).middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(p.cols())) = view(p.value());
        offset += p.cols();
    }
    auto parents = ids;
    return parts[0].graph().push(std::move(out), std::move(parents), [ids](Graph& g, std::size_t self) {
        const auto gy = view(g.grad_of(self));
        std::size_t offset = 0;
        for (std::size_t id : ids) {
            const auto c = static_cast<Eigen::Index>(g.value(id).cols());
            if (g.requires_grad(id)) {
                view(g.grad_accum(id)) += gy.middleCols(static_cast<Eigen::Index>(offset), c);
            }
            offset += static_cast<std::size_t>(c);
        }
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) {
        throw ShapeError("concat_rows: no inputs");
    }
    const std::size_t cols = parts[0].cols();
    std::size_t rows = 0;
    std::vector<std::size_t> ids;
    for (const Var& p : parts) {
        require_same_graph(parts[0], p, "concat_rows");
        if (p.cols() != cols) {
            shape_error("concat_rows", parts[0].value(), p.value());
        }
        rows += p.rows();
        ids.push_back(p.id());
    }
    Tensor out(rows, cols);
    std::size_t offset = 0;
    for (const Var& p : parts) {
        std::copy_n(p.value().data(), p.value().size(), out.data() + offset);
        offset += p.value().size();
    }
    auto parents = ids;
    return parts[0].graph().push(std::move(out), std::move(parents), [ids](Graph& g, std::size_t self) {
        const Tensor& gy = g.grad_of(self);
        std::size_t offset = 0;
        for (std::size_t id : ids) {
            const std::size_t n = g.value(id).size();
            if (g.requires_grad(id)) {
                Tensor& gx = g.grad_accum(id);
                for (std::size_t i = 0; i < n; ++i) {
                    gx[i] += gy[offset + i];
                }
            }
            offset += n;
        }
    });
}

Var sum(Var a) {
    const Tensor& x = a.value();
    double total = 0.0;
    for (double v : x.values()) {
        total += v;
    }
    const std::size_t pa = a.id();
    return a.graph().push(Tensor::scalar(total), {pa}, [pa](Graph& g, std::size_t self) {
        const double gy = g.grad_of(self)[0];
        Tensor& gx = g.grad_accum(pa);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += gy;
        }
    });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var mean_rows(Var a) {
    const Tensor& x = a.value();
    const double inv = 1.0 / static_cast<double>(x.rows());
    Tensor out(1, x.cols());
    view(out).row(0) = view(x).colwise().sum() * inv;
    const std::size_t pa = a.id();
    return a.graph().push(std::move(out), {pa}, [pa, inv](Graph& g, std::size_t self) {
        const auto gy = view(g.grad_of(self));
        view(g.grad_accum(pa)).rowwise() += gy.row(0) * inv;
    });
}

Var pairwise_distances(Var h, double eps) {
    const Tensor& x = h.value();
    const std::size_t b = x.rows();
    const std::size_t d = x.cols();
    Tensor out(b, b);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double t = x(i, k) - x(j, k);
                s += t * t;
            }
            out(i, j) = std::sqrt(s + eps);
        }
    }
    const std::size_t ph = h.id();
    return h.graph().push(std::move(out), {ph}, [ph](Graph& g, std::size_t self) {
        const Tensor& x = g.value(ph);
        const Tensor& dist = g.value(self);
        const Tensor& gy = g.grad_of(self);
        Tensor& gx = g.grad_accum(ph);
        const std::size_t b = x.rows();
        const std::size_t d = x.cols();
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < b; ++j) {
                if (i == j) {
                    continue;
                }
                const double w = (gy(i, j) + gy(j, i)) / dist(i, j);
                if (w == 0.0) {
                    continue;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    gx(i, k) += w * (x(i, k) - x(j, k));
                }
            }
        }
    });
}

Var off_diagonal(Var a) {
    const Tensor& x = a.value();
    const std::size_t n = x.rows();
    if (x.rank() != 2 || x.cols() != n || n < 2) {
        throw ShapeError("off_diagonal expects a square matrix of size >= 2, got " + x.shape_string());
    }
    Tensor out(n, n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0, c = 0; j < n; ++j) {
            if (j != i) {
                out(i, c++) = x(i, j);
            }
        }
    }
    const std::size_t pa = a.id();
    return a.graph().push(std::move(out), {pa}, [pa, n](Graph& g, std::size_t self) {
        if (!g.requires_grad(pa)) {
            return;
        }
        const Tensor& gy = g.grad_of(self);
        Tensor& gx = g.grad_accum(pa);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0, c = 0; j < n; ++j) {
                if (j != i) {
                    gx(i, j) += gy(i, c++);
                }
            }
        }
    });
}

Var stop_gradient(Var a) { return a.graph().constant(a.value()); }

LstmState lstm_step(Var x_t, LstmState state, const LstmWeights& w) {
    const std::size_t d = state.h.cols();
    if (w.w_hh.rows() != d || w.w_hh.cols() != 4 * d || w.w_ih.cols() != 4 * d || x_t.cols() != w.w_ih.rows()) {
        shape_error("lstm_step", x_t.value(), w.w_ih.value());
    }
    Var gates = add_row(add(matmul(x_t, w.w_ih), matmul(state.h, w.w_hh)), w.bias);
    Var i = sigmoid(slice_cols(gates, 0, d));
    Var f = sigmoid(slice_cols(gates, d, d));
    Var cand = tanh(slice_cols(gates, 2 * d, d));
    Var o = sigmoid(slice_cols(gates, 3 * d, d));
    Var c = add(mul(f, state.c), mul(i, cand));
    Var h = mul(o, tanh(c));
    return {h, c};
}

Var lstm_sequence(Var x, const LstmWeights& w) {
    Graph& g = x.graph();
    const std::size_t d = w.w_hh.rows();
    if (w.w_hh.cols() != 4 * d || w.w_ih.cols() != 4 * d || x.cols() != w.w_ih.rows() || w.bias.cols() != 4 * d) {
        shape_error("lstm_sequence", x.value(), w.w_ih.value());
    }
    // Input projections for all steps at once; per-step work is the recurrence.
    Var projected = add_row(matmul(x, w.w_ih), w.bias);
    LstmState s{g.constant(Tensor(1, d)), g.constant(Tensor(1, d))};
    std::vector<Var> hidden;
    hidden.reserve(x.rows());
    for (std::size_t t = 0; t < x.rows(); ++t) {
        Var gates = add(slice_rows(projected, t, 1), matmul(s.h, w.w_hh));
        Var i = sigmoid(slice_cols(gates, 0, d));
        Var f = sigmoid(slice_cols(gates, d, d));
        Var cand = tanh(slice_cols(gates, 2 * d, d));
        Var o = sigmoid(slice_cols(gates, 3 * d, d));
        s.c = add(mul(f, s.c), mul(i, cand));
        s.h = mul(o, tanh(s.c));
        hidden.push_back(s.h);
    }
    return concat_rows(hidden);
}

}  // namespace ad

}  // namespace trajsim
