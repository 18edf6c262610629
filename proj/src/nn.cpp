#include "pave/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace pave {

Var ParamRegistry::create(const std::string& name, std::vector<std::int64_t> shape, std::vector<double> data) {
    if (index_.count(name)) throw std::invalid_argument("ParamRegistry: duplicate parameter '" + name + "'");
    Var v = make_var(std::move(shape), std::move(data), /*requires_grad=*/true);
    v->name = name;
    index_[name] = params_.size();
    params_.emplace_back(name, v);
    return v;
}

Var ParamRegistry::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("ParamRegistry: unknown parameter '" + name + "'");
    return params_[it->second].second;
}

std::vector<std::pair<std::string, CheckpointEntry>> ParamRegistry::snapshot() const {
    std::vector<std::pair<std::string, CheckpointEntry>> out;
    out.reserve(params_.size());
    for (const auto& [name, v] : params_) out.emplace_back(name, CheckpointEntry{v->shape, v->data});
    return out;
}

void ParamRegistry::load(const std::map<std::string, CheckpointEntry>& entries) {
    for (auto& [name, v] : params_) {
        auto it = entries.find(name);
        if (it == entries.end()) throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
        if (it->second.shape != v->shape) {
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': file " +
                                     shape_str(it->second.shape) + " vs model " + shape_str(v->shape));
        }
        v->data = it->second.data;
    }
}

namespace {

std::vector<double> xavier(std::int64_t in, std::int64_t out, Rng& rng) {
    const double lim = std::sqrt(6.0 / static_cast<double>(in + out));
    std::vector<double> w(static_cast<std::size_t>(in * out));
    for (auto& x : w) x = rng.uniform(-lim, lim);
    return w;
}

}  // namespace

Linear::Linear(ParamRegistry& reg, const std::string& prefix, std::int64_t in, std::int64_t out, Rng& rng,
               bool zero_init) {
    weight = reg.create(prefix + ".weight", {in, out},
                        zero_init ? std::vector<double>(static_cast<std::size_t>(in * out), 0.0) : xavier(in, out, rng));
    bias = reg.create(prefix + ".bias", {out}, std::vector<double>(static_cast<std::size_t>(out), 0.0));
}

LayerNormBlock::LayerNormBlock(ParamRegistry& reg, const std::string& prefix, std::int64_t dim) {
    gamma = reg.create(prefix + ".gamma", {dim}, std::vector<double>(static_cast<std::size_t>(dim), 1.0));
    beta = reg.create(prefix + ".beta", {dim}, std::vector<double>(static_cast<std::size_t>(dim), 0.0));
}

Ffn::Ffn(ParamRegistry& reg, const std::string& prefix, std::int64_t dim, std::int64_t hidden, Rng& rng)
    : fc1(reg, prefix + ".fc1", dim, hidden, rng),
      fc2(reg, prefix + ".fc2", hidden, dim, rng),
      norm(reg, prefix + ".norm", dim) {}

Mlp::Mlp(ParamRegistry& reg, const std::string& prefix, std::int64_t in, std::int64_t hidden, std::int64_t out,
         Rng& rng, bool zero_out)
    : fc1(reg, prefix + ".fc1", in, hidden, rng), fc2(reg, prefix + ".fc2", hidden, out, rng, zero_out) {}

Mhsa::Mhsa(ParamRegistry& reg, const std::string& prefix, std::int64_t dim, int h, Rng& rng)
    : wq(reg, prefix + ".wq", dim, dim, rng),
      wk(reg, prefix + ".wk", dim, dim, rng),
      wv(reg, prefix + ".wv", dim, dim, rng),
      wo(reg, prefix + ".wo", dim, dim, rng),
      norm(reg, prefix + ".norm", dim),
      heads(h) {
    if (dim % h != 0) {
        throw std::invalid_argument("mhsa: dim " + std::to_string(dim) + " not divisible by heads " + std::to_string(h));
    }
}

Var Mhsa::forward(const Var& tokens) const {
    if (tokens->rank() != 2 || tokens->dim(0) < 1) throw std::invalid_argument("mhsa: need [M,D] with M >= 1");
    const std::int64_t d = tokens->dim(1);
    const std::int64_t dh = d / heads;
    Var q = wq.forward(tokens), k = wk.forward(tokens), v = wv.forward(tokens);
    std::vector<Var> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < heads; ++h) {
        Var qh = slice_cols(q, h * dh, dh);
        Var kh = slice_cols(k, h * dh, dh);
        Var vh = slice_cols(v, h * dh, dh);
        Var attn = softmax(scale(matmul_nt(qh, kh), inv_sqrt), 1);
        head_outs.push_back(matmul(attn, vh));
    }
    Var merged = heads == 1 ? head_outs[0] : concat_cols(head_outs);
    return norm.forward(add(tokens, wo.forward(merged)));
}

Var Mhsa::forward_blocks(const Var& tokens, std::int64_t block) const {
    if (tokens->rank() != 2 || tokens->dim(0) < 1) throw std::invalid_argument("mhsa: need [M,D] with M >= 1");
    const std::int64_t d = tokens->dim(1);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d / heads));
    Var q = wq.forward(tokens), k = wk.forward(tokens), v = wv.forward(tokens);
    Var merged = block_attention(q, k, v, heads, block, inv_sqrt);
    return norm.forward(add(tokens, wo.forward(merged)));
}

Var block_attention(const Var& q, const Var& k, const Var& v, int heads, std::int64_t block, double scale) {
    if (q->rank() != 2 || q->shape != k->shape || q->shape != v->shape) {
        throw std::invalid_argument("block_attention: q/k/v must share a [R,D] shape");
    }
    const std::int64_t r = q->dim(0), d = q->dim(1);
    if (block < 1 || r % block != 0) throw std::invalid_argument("block_attention: rows not divisible by block");
    if (heads < 1 || d % heads != 0) throw std::invalid_argument("block_attention: dim not divisible by heads");
    const std::int64_t dh = d / heads;
    const std::int64_t nb = r / block;

    auto out = std::make_shared<TensorNode>();
    out->shape = {r, d};
    out->data.assign(static_cast<std::size_t>(r * d), 0.0);
    out->name = "block_attention";
    out->parents = {q, k, v};
    out->requires_grad = q->requires_grad || k->requires_grad || v->requires_grad;

    // attn[i*block+j] for the current (block, head); rebuilt in backward, so
    // nothing beyond the inputs is captured.
    auto run = [r, d, dh, nb, block, heads, scale](const double* qd, const double* kd, const double* vd,
                                                   std::int64_t b, int h, std::vector<double>& attn) {
        const std::int64_t r0 = b * block;
        for (std::int64_t i = 0; i < block; ++i) {
            const double* qi = qd + (r0 + i) * d + h * dh;
            double* arow = attn.data() + i * block;
            double mx = -1e308;
            for (std::int64_t j = 0; j < block; ++j) {
                const double* kj = kd + (r0 + j) * d + h * dh;
                double s = 0.0;
                for (std::int64_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
                arow[j] = s * scale;
                mx = std::max(mx, arow[j]);
            }
            double denom = 0.0;
            for (std::int64_t j = 0; j < block; ++j) {
                arow[j] = std::exp(arow[j] - mx);
                denom += arow[j];
            }
            for (std::int64_t j = 0; j < block; ++j) arow[j] /= denom;
        }
        (void)vd;
        (void)heads;
        (void)r;
        (void)nb;
    };

    std::vector<double> attn(static_cast<std::size_t>(block * block));
    for (std::int64_t b = 0; b < nb; ++b) {
        const std::int64_t r0 = b * block;
        for (int h = 0; h < heads; ++h) {
            run(q->data.data(), k->data.data(), v->data.data(), b, h, attn);
            for (std::int64_t i = 0; i < block; ++i) {
                double* orow = out->data.data() + (r0 + i) * d + h * dh;
                const double* arow = attn.data() + i * block;
                for (std::int64_t j = 0; j < block; ++j) {
                    const double* vj = v->data.data() + (r0 + j) * d + h * dh;
                    for (std::int64_t c = 0; c < dh; ++c) orow[c] += arow[j] * vj[c];
                }
            }
        }
    }

    if (out->requires_grad) {
        TensorNode* o = out.get();
        Var pq = q, pk = k, pv = v;
        out->backprop = [o, pq, pk, pv, run, r, d, dh, nb, block, heads, scale]() {
            pq->ensure_grad();
            pk->ensure_grad();
            pv->ensure_grad();
            std::vector<double> attn(static_cast<std::size_t>(block * block));
            std::vector<double> ds(static_cast<std::size_t>(block * block));
            for (std::int64_t b = 0; b < nb; ++b) {
                const std::int64_t r0 = b * block;
                for (int h = 0; h < heads; ++h) {
                    run(pq->data.data(), pk->data.data(), pv->data.data(), b, h, attn);
                    for (std::int64_t i = 0; i < block; ++i) {
                        const double* grow = o->grad.data() + (r0 + i) * d + h * dh;
                        const double* arow = attn.data() + i * block;
                        double* dsrow = ds.data() + i * block;
                        double expected = 0.0;  // sum_j a_ij (g_i . v_j) for the softmax Jacobian
                        for (std::int64_t j = 0; j < block; ++j) {
                            const double* vj = pv->data.data() + (r0 + j) * d + h * dh;
                            double* vg = pv->grad.data() + (r0 + j) * d + h * dh;
                            double gv = 0.0;
                            for (std::int64_t c = 0; c < dh; ++c) {
                                gv += grow[c] * vj[c];
                                vg[c] += arow[j] * grow[c];
                            }
                            dsrow[j] = gv;
                            expected += arow[j] * gv;
                        }
                        for (std::int64_t j = 0; j < block; ++j) {
                            const double g_logit = arow[j] * (dsrow[j] - expected) * scale;
                            const double* kj = pk->data.data() + (r0 + j) * d + h * dh;
                            const double* qi = pq->data.data() + (r0 + i) * d + h * dh;
                            double* qg = pq->grad.data() + (r0 + i) * d + h * dh;
                            double* kg = pk->grad.data() + (r0 + j) * d + h * dh;
                            for (std::int64_t c = 0; c < dh; ++c) {
                                qg[c] += g_logit * kj[c];
                                kg[c] += g_logit * qi[c];
                            }
                        }
                    }
                }
            }
        };
    }
    return out;
}

Var add_embeddings(const Var& tokens, const Var& pos_emb, const Var& scale_emb,
                   const std::vector<std::int64_t>& levels) {
    if (tokens->shape != pos_emb->shape) {
        throw std::invalid_argument("add_embeddings: token/positional shape mismatch " + shape_str(tokens->shape) +
                                    " vs " + shape_str(pos_emb->shape));
    }
    if (static_cast<std::int64_t>(levels.size()) != tokens->dim(0)) {
        throw std::invalid_argument("add_embeddings: level metadata missing for some tokens");
    }
    Var per_token_scale = gather_rows(scale_emb, levels);
    return add(add(tokens, pos_emb), per_token_scale);
}

}  // namespace pave
