#include "distenc/tape.hpp"

#include <cmath>
#include <cstring>

namespace distenc {

const char* op_name(Op op) {
    switch (op) {
        case Op::kLeaf: return "leaf";
        case Op::kMatmul: return "matmul";
        case Op::kTranspose: return "transpose";
        case Op::kAdd: return "add";
        case Op::kAddBias: return "add_bias";
        case Op::kMul: return "mul";
        case Op::kScale: return "scale";
        case Op::kRelu: return "relu";
        case Op::kExp: return "exp";
        case Op::kSoftmaxCols: return "softmax_columns";
        case Op::kLogSoftmaxCols: return "log_softmax_columns";
        case Op::kLayerNorm: return "layer_norm";
        case Op::kEmbeddingLookup: return "embedding_lookup";
        case Op::kConcatRows: return "concat_rows";
        case Op::kSliceRows: return "slice_rows";
        case Op::kCol: return "col";
        case Op::kSum: return "sum";
        case Op::kKlDiv: return "kl_div";
        case Op::kCosineSim: return "cosine_sim";
        case Op::kCrossEntropy: return "cross_entropy";
    }
    return "?";
}

int Tape::check(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
        throw ValueError("Var id " + std::to_string(v.id) + " not on this tape");
    return v.id;
}

void Tape::check_finite_or_throw(const Tensor& t, Op op) const {
    if (!check_finite_) return;
    for (float x : t.data)
        if (!std::isfinite(x))
            throw NonFiniteError(std::string("non-finite value out of ") + op_name(op));
}

Var Tape::push(Node n) {
    check_finite_or_throw(n.t, n.op);
    n.t.node_id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(n));
    return Var{nodes_.back().t.node_id};
}

Var Tape::leaf(Tensor t, bool requires_grad) {
    Node n;
    n.op = Op::kLeaf;
    n.t = std::move(t);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

Tensor Tape::grad_tensor(Var v) const {
    const Node& n = nodes_[check(v)];
    Tensor g(n.t.shape);
    if (!n.t.grad.empty()) g.data = n.t.grad;
    return g;
}

void Tape::truncate(size_t mark) {
    if (mark > nodes_.size()) throw ValueError("truncate mark past end of tape");
    nodes_.resize(mark);
}

namespace {

void require_rank2(const Tensor& t, const char* what) {
    if (t.shape.rank() != 2)
        throw ShapeError(std::string(what) + " expects a matrix, got " + t.shape.str());
}

void require_rank12(const Tensor& t, const char* what) {
    if (t.shape.rank() != 1 && t.shape.rank() != 2)
        throw ShapeError(std::string(what) + " expects a vector or matrix, got " + t.shape.str());
}

}  // namespace

Var Tape::matmul(Var va, Var vb) {
    const Tensor& a = nodes_[check(va)].t;
    const Tensor& b = nodes_[check(vb)].t;
    require_rank2(a, "matmul lhs");
    require_rank2(b, "matmul rhs");
    const int m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
    if (k != k2)
        throw ShapeError("matmul inner extents disagree: " + a.shape.str() + " . " + b.shape.str());

    Node out;
    out.op = Op::kMatmul;
    out.inputs = {va.id, vb.id};
    out.requires_grad = nodes_[va.id].requires_grad || nodes_[vb.id].requires_grad;
    out.t = Tensor(Shape::mat(m, n));
    const float* ap = a.data.data();
    const float* bp = b.data.data();
    float* cp = out.t.data.data();
    for (int i = 0; i < m; ++i) {
        float* ci = cp + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const float av = ap[static_cast<size_t>(i) * k + kk];
            const float* bk = bp + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bk[j];
        }
    }
    return push(std::move(out));
}

Var Tape::transpose(Var vx) {
    const Tensor& x = nodes_[check(vx)].t;
    require_rank2(x, "transpose");
    const int r = x.rows(), c = x.cols();
    Node out;
    out.op = Op::kTranspose;
    out.inputs = {vx.id};
    out.requires_grad = nodes_[vx.id].requires_grad;
    out.t = Tensor(Shape::mat(c, r));
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.t.at(j, i) = x.at(i, j);
    return push(std::move(out));
}

Var Tape::add(Var va, Var vb) {
    const Tensor& a = nodes_[check(va)].t;
    const Tensor& b = nodes_[check(vb)].t;
    if (a.shape != b.shape)
        throw ShapeError("add shapes disagree: " + a.shape.str() + " vs " + b.shape.str());
    Node out;
    out.op = Op::kAdd;
    out.inputs = {va.id, vb.id};
    out.requires_grad = nodes_[va.id].requires_grad || nodes_[vb.id].requires_grad;
    out.t = Tensor(a.shape);
    for (size_t i = 0; i < a.data.size(); ++i) out.t.data[i] = a.data[i] + b.data[i];
    return push(std::move(out));
}

Var Tape::add_bias(Var vx, Var vbias) {
    const Tensor& x = nodes_[check(vx)].t;
    const Tensor& b = nodes_[check(vbias)].t;
    require_rank2(x, "add_bias input");
    if (b.shape.rank() != 1 || b.rows() != x.rows())
        throw ShapeError("add_bias bias " + b.shape.str() + " does not match rows of " +
                         x.shape.str());
    const int r = x.rows(), c = x.cols();
    Node out;
    out.op = Op::kAddBias;
    out.inputs = {vx.id, vbias.id};
    out.requires_grad = nodes_[vx.id].requires_grad || nodes_[vbias.id].requires_grad;
    out.t = Tensor(x.shape);
    for (int i = 0; i < r; ++i) {
        const float bi = b.data[i];
        for (int j = 0; j < c; ++j) out.t.at(i, j) = x.at(i, j) + bi;
    }
    return push(std::move(out));
}

Var Tape::mul(Var va, Var vb) {
    const Tensor& a = nodes_[check(va)].t;
    const Tensor& b = nodes_[check(vb)].t;
    if (a.shape != b.shape)
        throw ShapeError("mul shapes disagree: " + a.shape.str() + " vs " + b.shape.str());
    Node out;
    out.op = Op::kMul;
    out.inputs = {va.id, vb.id};
    out.requires_grad = nodes_[va.id].requires_grad || nodes_[vb.id].requires_grad;
    out.t = Tensor(a.shape);
    for (size_t i = 0; i < a.data.size(); ++i) out.t.data[i] = a.data[i] * b.data[i];
    return push(std::move(out));
}

Var Tape::scale(Var vx, float c) {
    const Tensor& x = nodes_[check(vx)].t;
    Node out;
    out.op = Op::kScale;
    out.inputs = {vx.id};
    out.requires_grad = nodes_[vx.id].requires_grad;
    out.fattr = c;
    out.t = Tensor(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) out.t.data[i] = c * x.data[i];
    return push(std::move(out));
}

Var Tape::relu(Var vx) {
    const Tensor& x = nodes_[check(vx)].t;
    Node out;
    out.op = Op::kRelu;
    out.inputs = {vx.id};
    out.requires_grad = nodes_[vx.id].requires_grad;
    out.t = Tensor(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) out.t.data[i] = x.data[i] > 0.f ? x.data[i] : 0.f;
    return push(std::move(out));
}

Var Tape::exp(Var vx) {
    const Tensor& x = nodes_[check(vx)].t;
    Node out;
    out.op = Op::kExp;
    out.inputs = {vx.id};
    out.requires_grad = nodes_[vx.id].requires_grad;
    out.t = Tensor(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i)
        out.t.data[i] = static_cast<float>(std::exp(static_cast<double>(x.data[i])));
    return push(std::move(out));
}

Var Tape::softmax_columns(Var vx) {
    const Tensor& x = nodes_[check(vx)].t;
    require_rank12(x, "softmax_columns");
    const int r = x.rows(), c = x.cols();
    Node out;
    out.op = Op::kSoftmaxCols;
    out.inputs = {vx.id};
    out.requires_grad = nodes_[vx.id].requires_grad;
    out.t = Tensor(x.shape);
    std::vector<double> e(static_cast<size_t>(r));
    for (int j = 0; j < c; ++j) {
        float mx = x.data[j];
        for (int i = 1; i < r; ++i) mx = std::max(mx, x.data[static_cast<size_t>(i) * c + j]);
        double s = 0.0;
        for (int i = 0; i < r; ++i) {
            e[i] = std::exp(static_cast<double>(x.data[static_cast<size_t>(i) * c + j]) - mx);
            s += e[i];
        }
        for (int i = 0; i < r; ++i)
            out.t.data[static_cast<size_t>(i) * c + j] = static_cast<float>(e[i] / s);
    }
    return push(std::move(out));
}

Var Tape::log_softmax_columns(Var vx) {
    const Tensor& x = nodes_[check(vx)].t;
    require_rank12(x, "log_softmax_columns");
    const int r = x.rows(), c = x.cols();
    Node out;
    out.op = Op::kLogSoftmaxCols;
    out.inputs = {vx.id};
    out.requires_grad = nodes_[vx.id].requires_grad;
    out.t = Tensor(x.shape);
    for (int j = 0; j < c; ++j) {
        float mx = x.data[j];
        for (int i = 1; i < r; ++i) mx = std::max(mx, x.data[static_cast<size_t>(i) * c + j]);
        double s = 0.0;
        for (int i = 0; i < r; ++i)
            s += std::exp(static_cast<double>(x.data[static_cast<size_t>(i) * c + j]) - mx);
        const double lse = mx + std::log(s);
        for (int i = 0; i < r; ++i)
            out.t.data[static_cast<size_t>(i) * c + j] =
                static_cast<float>(x.data[static_cast<size_t>(i) * c + j] - lse);
    }
    return push(std::move(out));
}

Var Tape::layer_norm(Var vx, Var vgain, Var vbias, float eps) {
    const Tensor& x = nodes_[check(vx)].t;
    const Tensor& g = nodes_[check(vgain)].t;
    const Tensor& b = nodes_[check(vbias)].t;
    require_rank12(x, "layer_norm");
    if (eps <= 0.f) throw ValueError("layer_norm eps must be positive");
    const int d = x.rows(), n = x.cols();
    if (g.shape.rank() != 1 || b.shape.rank() != 1 || g.rows() != d || b.rows() != d)
        throw ShapeError("layer_norm gain/bias must be length-" + std::to_string(d) + " vectors");

    Node out;
    out.op = Op::kLayerNorm;
    out.inputs = {vx.id, vgain.id, vbias.id};
    out.requires_grad = nodes_[vx.id].requires_grad || nodes_[vgain.id].requires_grad ||
                        nodes_[vbias.id].requires_grad;
    out.fattr = eps;
    out.t = Tensor(x.shape);
    for (int j = 0; j < n; ++j) {
        double mu = 0.0;
        for (int i = 0; i < d; ++i) mu += x.data[static_cast<size_t>(i) * n + j];
        mu /= d;
        double var = 0.0;
        for (int i = 0; i < d; ++i) {
            const double dvi = x.data[static_cast<size_t>(i) * n + j] - mu;
            var += dvi * dvi;
        }
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int i = 0; i < d; ++i) {
            const double xh = (x.data[static_cast<size_t>(i) * n + j] - mu) * inv;
            out.t.data[static_cast<size_t>(i) * n + j] =
                static_cast<float>(g.data[i] * xh + b.data[i]);
        }
    }
    return push(std::move(out));
}

Var Tape::embedding_lookup(Var vtable, std::span<const int> ids) {
    const Tensor& table = nodes_[check(vtable)].t;
    require_rank2(table, "embedding_lookup table");
    if (ids.empty()) throw ValueError("embedding_lookup: empty id list");
    const int v = table.rows(), d = table.cols(), n = static_cast<int>(ids.size());
    for (int id : ids)
        if (id < 0 || id >= v)
            throw ValueError("token id " + std::to_string(id) + " outside vocabulary of size " +
                             std::to_string(v));
    Node out;
    out.op = Op::kEmbeddingLookup;
    out.inputs = {vtable.id};
    out.requires_grad = nodes_[vtable.id].requires_grad;
    out.iattr.assign(ids.begin(), ids.end());
    out.t = Tensor(Shape::mat(d, n));
    for (int i = 0; i < n; ++i)
        for (int row = 0; row < d; ++row)
            out.t.at(row, i) = table.at(ids[i], row);
    return push(std::move(out));
}

Var Tape::concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ValueError("concat_rows: no inputs");
    int total_rows = 0;
    const int c = nodes_[check(parts[0])].t.cols();
    for (Var p : parts) {
        const Tensor& t = nodes_[check(p)].t;
        require_rank2(t, "concat_rows part");
        if (t.cols() != c)
            throw ShapeError("concat_rows column mismatch: " + t.shape.str() + " vs " +
                             std::to_string(c) + " cols");
        total_rows += t.rows();
    }
    Node out;
    out.op = Op::kConcatRows;
    out.requires_grad = false;
    for (Var p : parts) {
        out.inputs.push_back(p.id);
        out.requires_grad = out.requires_grad || nodes_[p.id].requires_grad;
    }
    out.t = Tensor(Shape::mat(total_rows, c));
    int row0 = 0;
    for (Var p : parts) {
        const Tensor& t = nodes_[p.id].t;
        std::memcpy(out.t.data.data() + static_cast<size_t>(row0) * c, t.data.data(),
                    t.data.size() * sizeof(float));
        row0 += t.rows();
    }
    return push(std::move(out));
}

Var Tape::slice_rows(Var vx, int begin, int count) {
    const Tensor& x = nodes_[check(vx)].t;
    require_rank12(x, "slice_rows");
    const int r = x.rows(), c = x.cols();
    if (begin < 0 || count <= 0 || begin + count > r)
        throw ShapeError("slice_rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + x.shape.str());
    Node out;
    out.op = Op::kSliceRows;
    out.inputs = {vx.id};
    out.requires_grad = nodes_[vx.id].requires_grad;
    out.i0 = begin;
    out.i1 = count;
    out.t = Tensor(x.shape.rank() == 1 ? Shape::vec(count) : Shape::mat(count, c));
    std::memcpy(out.t.data.data(), x.data.data() + static_cast<size_t>(begin) * c,
                static_cast<size_t>(count) * c * sizeof(float));
    return push(std::move(out));
}

Var Tape::col(Var vx, int j) {
    const Tensor& x = nodes_[check(vx)].t;
    require_rank2(x, "col");
    const int r = x.rows(), c = x.cols();
    if (j < 0 || j >= c) throw ShapeError("col " + std::to_string(j) + " out of " + x.shape.str());
    Node out;
    out.op = Op::kCol;
    out.inputs = {vx.id};
    out.requires_grad = nodes_[vx.id].requires_grad;
    out.i0 = j;
    out.t = Tensor(Shape::vec(r));
    for (int i = 0; i < r; ++i) out.t.data[i] = x.at(i, j);
    return push(std::move(out));
}

Var Tape::sum(Var vx) {
    const Tensor& x = nodes_[check(vx)].t;
    Node out;
    out.op = Op::kSum;
    out.inputs = {vx.id};
    out.requires_grad = nodes_[vx.id].requires_grad;
    double s = 0.0;
    for (float v : x.data) s += v;
    out.t = Tensor::scalar(static_cast<float>(s));
    return push(std::move(out));
}

namespace {

// Column sums for distribution validation, double accumulators.
void validate_distribution(const Tensor& t, const char* name) {
    const int r = t.rows(), c = t.cols();
    for (float v : t.data)
        if (v < 0.f)
            throw ValueError(std::string("kl_div: ") + name + " has a negative entry");
    for (int j = 0; j < c; ++j) {
        double s = 0.0;
        for (int i = 0; i < r; ++i) s += t.data[static_cast<size_t>(i) * c + j];
        if (std::abs(s - 1.0) > 1e-5)
            throw ValueError(std::string("kl_div: ") + name + " column " + std::to_string(j) +
                             " sums to " + std::to_string(s) + ", not 1");
    }
}

}  // namespace

Var Tape::kl_div(Var vp, Var vq) {
    const Tensor& p = nodes_[check(vp)].t;
    const Tensor& q = nodes_[check(vq)].t;
    require_rank12(p, "kl_div");
    if (p.shape != q.shape)
        throw ShapeError("kl_div shapes disagree: " + p.shape.str() + " vs " + q.shape.str());
    validate_distribution(p, "p");
    validate_distribution(q, "q");

    const int r = p.rows(), c = p.cols();
    double total = 0.0;
    for (int j = 0; j < c; ++j) {
        double sp = 0.0, sq = 0.0;
        for (int i = 0; i < r; ++i) {
            sp += p.data[static_cast<size_t>(i) * c + j];
            sq += q.data[static_cast<size_t>(i) * c + j];
        }
        for (int i = 0; i < r; ++i) {
            const double pi = p.data[static_cast<size_t>(i) * c + j];
            const double qi = q.data[static_cast<size_t>(i) * c + j];
            if (pi == 0.0) continue;  // 0 * ln 0 := 0
            if (qi == 0.0)
                throw ValueError("kl_div: infinite divergence, q is 0 where p > 0 (column " +
                                 std::to_string(j) + ", row " + std::to_string(i) + ")");
            total += (pi / sp) * std::log((pi / sp) / (qi / sq));
        }
    }
    // Nonnegative by construction; shave off double rounding residue.
    total = std::max(total, 0.0);

    Node out;
    out.op = Op::kKlDiv;
    out.inputs = {vp.id, vq.id};
    out.requires_grad = nodes_[vp.id].requires_grad || nodes_[vq.id].requires_grad;
    out.t = Tensor::scalar(static_cast<float>(total));
    return push(std::move(out));
}

Var Tape::cosine_sim(Var vu, Var vv) {
    const Tensor& u = nodes_[check(vu)].t;
    const Tensor& v = nodes_[check(vv)].t;
    if (u.shape.rank() != 1 || v.shape.rank() != 1 || u.rows() != v.rows())
        throw ShapeError("cosine_sim expects equal-length vectors, got " + u.shape.str() + " and " +
                         v.shape.str());
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (int i = 0; i < u.rows(); ++i) {
        dot += static_cast<double>(u.data[i]) * v.data[i];
        nu += static_cast<double>(u.data[i]) * u.data[i];
        nv += static_cast<double>(v.data[i]) * v.data[i];
    }
    if (nu == 0.0 || nv == 0.0) throw ValueError("cosine_sim: zero vector");
    double c = dot / (std::sqrt(nu) * std::sqrt(nv));
    c = std::min(1.0, std::max(-1.0, c));

    Node out;
    out.op = Op::kCosineSim;
    out.inputs = {vu.id, vv.id};
    out.requires_grad = nodes_[vu.id].requires_grad || nodes_[vv.id].requires_grad;
    out.t = Tensor::scalar(static_cast<float>(c));
    return push(std::move(out));
}

Var Tape::cross_entropy(Var vlp, std::span<const MaskEntry> entries) {
    const Tensor& lp = nodes_[check(vlp)].t;
    require_rank2(lp, "cross_entropy log_probs");
    if (entries.empty()) throw ValueError("cross_entropy: no entries");
    const int v = lp.rows(), n = lp.cols();
    double total = 0.0;
    Node out;
    out.op = Op::kCrossEntropy;
    out.inputs = {vlp.id};
    out.requires_grad = nodes_[vlp.id].requires_grad;
    for (const MaskEntry& e : entries) {
        if (e.position < 0 || e.position >= n)
            throw ValueError("cross_entropy: position " + std::to_string(e.position) +
                             " outside sequence of length " + std::to_string(n));
        if (e.token_id < 0 || e.token_id >= v)
            throw ValueError("cross_entropy: token id " + std::to_string(e.token_id) +
                             " outside vocabulary of size " + std::to_string(v));
        total -= lp.at(e.token_id, e.position);
        out.iattr.push_back(e.position);
        out.iattr.push_back(e.token_id);
    }
    out.t = Tensor::scalar(static_cast<float>(total));
    return push(std::move(out));
}

void Tape::zero_grad() {
    for (Node& n : nodes_)
        std::fill(n.t.grad.begin(), n.t.grad.end(), 0.f);
}

void Tape::backward(Var root) {
    const int rid = check(root);
    if (nodes_[rid].t.numel() != 1)
        throw ValueError("backward root must be a scalar, got " + nodes_[rid].t.shape.str());
    if (!nodes_[rid].requires_grad) return;

    // Reachability sweep. Interior grads are per-call scratch; leaf grads keep
    // accumulating across calls.
    std::vector<char> reach(nodes_.size(), 0);
    reach[rid] = 1;
    for (int id = rid; id >= 0; --id) {
        if (!reach[id] || !nodes_[id].requires_grad) continue;
        Node& n = nodes_[id];
        for (int input : n.inputs)
            if (nodes_[input].requires_grad) reach[input] = 1;
        if (n.t.grad.empty())
            n.t.grad.assign(n.t.data.size(), 0.f);
        else if (n.op != Op::kLeaf)
            std::fill(n.t.grad.begin(), n.t.grad.end(), 0.f);
    }

    nodes_[rid].t.grad[0] = 1.f;
    for (int id = rid; id >= 0; --id)
        if (reach[id] && nodes_[id].requires_grad && nodes_[id].op != Op::kLeaf) backward_node(id);
}

void Tape::backward_node(int id) {
    Node& n = nodes_[id];
    const std::vector<float>& g = n.t.grad;
    auto in = [&](int k) -> Node& { return nodes_[n.inputs[k]]; };
    auto wants = [&](int k) { return in(k).requires_grad; };
    auto gbuf = [&](int k) -> std::vector<float>& {
        Node& m = in(k);
        if (m.t.grad.empty()) m.t.grad.assign(m.t.data.size(), 0.f);
        return m.t.grad;
    };

    switch (n.op) {
        case Op::kLeaf:
            break;
        case Op::kMatmul: {
            const Tensor& a = in(0).t;
            const Tensor& b = in(1).t;
            const int m = a.rows(), k = a.cols(), nn = b.cols();
            if (wants(0)) {
                std::vector<float>& ga = gbuf(0);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < nn; ++j) {
                        const float gij = g[static_cast<size_t>(i) * nn + j];
                        if (gij == 0.f) continue;
                        const float* bk = b.data.data() + j;
                        float* gai = ga.data() + static_cast<size_t>(i) * k;
                        for (int kk = 0; kk < k; ++kk)
                            gai[kk] += gij * bk[static_cast<size_t>(kk) * nn];
                    }
            }
            if (wants(1)) {
                std::vector<float>& gb = gbuf(1);
                for (int i = 0; i < m; ++i) {
                    const float* ai = a.data.data() + static_cast<size_t>(i) * k;
                    const float* gi = g.data() + static_cast<size_t>(i) * nn;
                    for (int kk = 0; kk < k; ++kk) {
                        const float av = ai[kk];
                        if (av == 0.f) continue;
                        float* gbk = gb.data() + static_cast<size_t>(kk) * nn;
                        for (int j = 0; j < nn; ++j) gbk[j] += av * gi[j];
                    }
                }
            }
            break;
        }
        case Op::kTranspose: {
            if (!wants(0)) break;
            std::vector<float>& gx = gbuf(0);
            const int r = in(0).t.rows(), c = in(0).t.cols();
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j)
                    gx[static_cast<size_t>(i) * c + j] += g[static_cast<size_t>(j) * r + i];
            break;
        }
        case Op::kAdd: {
            for (int k = 0; k < 2; ++k) {
                if (!wants(k)) continue;
                std::vector<float>& gx = gbuf(k);
                for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            }
            break;
        }
        case Op::kAddBias: {
            const int r = n.t.rows(), c = n.t.cols();
            if (wants(0)) {
                std::vector<float>& gx = gbuf(0);
                for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            }
            if (wants(1)) {
                std::vector<float>& gb = gbuf(1);
                for (int i = 0; i < r; ++i) {
                    double s = 0.0;
                    for (int j = 0; j < c; ++j) s += g[static_cast<size_t>(i) * c + j];
                    gb[i] += static_cast<float>(s);
                }
            }
            break;
        }
        case Op::kMul: {
            const Tensor& a = in(0).t;
            const Tensor& b = in(1).t;
            if (wants(0)) {
                std::vector<float>& ga = gbuf(0);
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.data[i];
            }
            if (wants(1)) {
                std::vector<float>& gb = gbuf(1);
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.data[i];
            }
            break;
        }
        case Op::kScale: {
            if (!wants(0)) break;
            std::vector<float>& gx = gbuf(0);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += n.fattr * g[i];
            break;
        }
        case Op::kRelu: {
            if (!wants(0)) break;
            std::vector<float>& gx = gbuf(0);
            const Tensor& x = in(0).t;
            for (size_t i = 0; i < g.size(); ++i)
                if (x.data[i] > 0.f) gx[i] += g[i];
            break;
        }
        case Op::kExp: {
            if (!wants(0)) break;
            std::vector<float>& gx = gbuf(0);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.t.data[i];
            break;
        }
        case Op::kSoftmaxCols: {
            if (!wants(0)) break;
            std::vector<float>& gx = gbuf(0);
            const int r = n.t.rows(), c = n.t.cols();
            for (int j = 0; j < c; ++j) {
                double dot = 0.0;
                for (int i = 0; i < r; ++i)
                    dot += static_cast<double>(g[static_cast<size_t>(i) * c + j]) *
                           n.t.data[static_cast<size_t>(i) * c + j];
                for (int i = 0; i < r; ++i) {
                    const size_t ix = static_cast<size_t>(i) * c + j;
                    gx[ix] += static_cast<float>(n.t.data[ix] * (g[ix] - dot));
                }
            }
            break;
        }
        case Op::kLogSoftmaxCols: {
            if (!wants(0)) break;
            std::vector<float>& gx = gbuf(0);
            const int r = n.t.rows(), c = n.t.cols();
            for (int j = 0; j < c; ++j) {
                double sg = 0.0;
                for (int i = 0; i < r; ++i) sg += g[static_cast<size_t>(i) * c + j];
                for (int i = 0; i < r; ++i) {
                    const size_t ix = static_cast<size_t>(i) * c + j;
                    gx[ix] += static_cast<float>(
                        g[ix] - std::exp(static_cast<double>(n.t.data[ix])) * sg);
                }
            }
            break;
        }
        case Op::kLayerNorm: {
            const Tensor& x = in(0).t;
            const Tensor& gain = in(1).t;
            const int d = x.rows(), c = x.cols();
            const double eps = n.fattr;
            for (int j = 0; j < c; ++j) {
                double mu = 0.0;
                for (int i = 0; i < d; ++i) mu += x.data[static_cast<size_t>(i) * c + j];
                mu /= d;
                double var = 0.0;
                for (int i = 0; i < d; ++i) {
                    const double dv = x.data[static_cast<size_t>(i) * c + j] - mu;
                    var += dv * dv;
                }
                var /= d;
                const double inv = 1.0 / std::sqrt(var + eps);

                double m1 = 0.0, m2 = 0.0;
                for (int i = 0; i < d; ++i) {
                    const size_t ix = static_cast<size_t>(i) * c + j;
                    const double xh = (x.data[ix] - mu) * inv;
                    const double gh = static_cast<double>(g[ix]) * gain.data[i];
                    m1 += gh;
                    m2 += gh * xh;
                }
                m1 /= d;
                m2 /= d;
                if (wants(0)) {
                    std::vector<float>& gx = gbuf(0);
                    for (int i = 0; i < d; ++i) {
                        const size_t ix = static_cast<size_t>(i) * c + j;
                        const double xh = (x.data[ix] - mu) * inv;
                        const double gh = static_cast<double>(g[ix]) * gain.data[i];
                        gx[ix] += static_cast<float>(inv * (gh - m1 - xh * m2));
                    }
                }
                if (wants(1)) {
                    std::vector<float>& gg = gbuf(1);
                    for (int i = 0; i < d; ++i) {
                        const size_t ix = static_cast<size_t>(i) * c + j;
                        const double xh = (x.data[ix] - mu) * inv;
                        gg[i] += static_cast<float>(g[ix] * xh);
                    }
                }
                if (wants(2)) {
                    std::vector<float>& gb = gbuf(2);
                    for (int i = 0; i < d; ++i) gb[i] += g[static_cast<size_t>(i) * c + j];
                }
            }
            break;
        }
        case Op::kEmbeddingLookup: {
            if (!wants(0)) break;
            std::vector<float>& gt = gbuf(0);
            const int d = n.t.rows(), cols = n.t.cols();
            const int table_d = in(0).t.cols();
            for (int i = 0; i < cols; ++i) {
                const int row = n.iattr[i];
                for (int r = 0; r < d; ++r)
                    gt[static_cast<size_t>(row) * table_d + r] += g[static_cast<size_t>(r) * cols + i];
            }
            break;
        }
        case Op::kConcatRows: {
            const int c = n.t.cols();
            int row0 = 0;
            for (size_t k = 0; k < n.inputs.size(); ++k) {
                const int pr = in(static_cast<int>(k)).t.rows();
                if (wants(static_cast<int>(k))) {
                    std::vector<float>& gp = gbuf(static_cast<int>(k));
                    for (size_t i = 0; i < gp.size(); ++i)
                        gp[i] += g[static_cast<size_t>(row0) * c + i];
                }
                row0 += pr;
            }
            break;
        }
        case Op::kSliceRows: {
            if (!wants(0)) break;
            std::vector<float>& gx = gbuf(0);
            const int c = in(0).t.cols();
            for (size_t i = 0; i < g.size(); ++i)
                gx[static_cast<size_t>(n.i0) * c + i] += g[i];
            break;
        }
        case Op::kCol: {
            if (!wants(0)) break;
            std::vector<float>& gx = gbuf(0);
            const int c = in(0).t.cols();
            for (int i = 0; i < n.t.rows(); ++i)
                gx[static_cast<size_t>(i) * c + n.i0] += g[i];
            break;
        }
        case Op::kSum: {
            if (!wants(0)) break;
            std::vector<float>& gx = gbuf(0);
            const float gs = g[0];
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += gs;
            break;
        }
        case Op::kKlDiv: {
            const Tensor& p = in(0).t;
            const Tensor& q = in(1).t;
            const int r = p.rows(), c = p.cols();
            const float gs = g[0];
            for (int j = 0; j < c; ++j) {
                double sp = 0.0, sq = 0.0, f = 0.0;
                for (int i = 0; i < r; ++i) {
                    sp += p.data[static_cast<size_t>(i) * c + j];
                    sq += q.data[static_cast<size_t>(i) * c + j];
                }
                for (int i = 0; i < r; ++i) {
                    const double pi = p.data[static_cast<size_t>(i) * c + j];
                    const double qi = q.data[static_cast<size_t>(i) * c + j];
                    if (pi == 0.0) continue;
                    f += (pi / sp) * std::log((pi / sp) / (qi / sq));
                }
                if (wants(0)) {
                    std::vector<float>& gp = gbuf(0);
                    for (int i = 0; i < r; ++i) {
                        const size_t ix = static_cast<size_t>(i) * c + j;
                        const double pi = p.data[ix];
                        if (pi == 0.0) continue;  // zero-probability entries get zero gradient
                        const double qi = q.data[ix];
                        const double lr = std::log((pi / sp) / (qi / sq));
                        gp[ix] += static_cast<float>(gs * (lr - f) / sp);
                    }
                }
                if (wants(1)) {
                    std::vector<float>& gq = gbuf(1);
                    for (int i = 0; i < r; ++i) {
                        const size_t ix = static_cast<size_t>(i) * c + j;
                        const double pi = p.data[ix];
                        const double qi = q.data[ix];
                        const double ratio = qi == 0.0 ? 0.0 : (pi / sp) / (qi / sq);
                        gq[ix] += static_cast<float>(gs * (1.0 - ratio) / sq);
                    }
                }
            }
            break;
        }
        case Op::kCosineSim: {
            const Tensor& u = in(0).t;
            const Tensor& v = in(1).t;
            double dot = 0.0, nu2 = 0.0, nv2 = 0.0;
            for (int i = 0; i < u.rows(); ++i) {
                dot += static_cast<double>(u.data[i]) * v.data[i];
                nu2 += static_cast<double>(u.data[i]) * u.data[i];
                nv2 += static_cast<double>(v.data[i]) * v.data[i];
            }
            const double nu = std::sqrt(nu2), nv = std::sqrt(nv2);
            const double c = dot / (nu * nv);
            const float gs = g[0];
            if (wants(0)) {
                std::vector<float>& gu = gbuf(0);
                for (int i = 0; i < u.rows(); ++i)
                    gu[i] += static_cast<float>(gs * (v.data[i] / (nu * nv) - c * u.data[i] / nu2));
            }
            if (wants(1)) {
                std::vector<float>& gv = gbuf(1);
                for (int i = 0; i < v.rows(); ++i)
                    gv[i] += static_cast<float>(gs * (u.data[i] / (nu * nv) - c * v.data[i] / nv2));
            }
            break;
        }
        case Op::kCrossEntropy: {
            if (!wants(0)) break;
            std::vector<float>& glp = gbuf(0);
            const int cols = in(0).t.cols();
            const float gs = g[0];
            for (size_t e = 0; e + 1 < n.iattr.size(); e += 2) {
                const int pos = n.iattr[e];
                const int id = n.iattr[e + 1];
                glp[static_cast<size_t>(id) * cols + pos] -= gs;
            }
            break;
        }
    }
}

}  // namespace distenc
