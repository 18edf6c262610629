#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pave/checkpoint.hpp"
#include "pave/tensor.hpp"

namespace pave {

// Named parameter store. Checkpoint naming convention:
// "<module>.<block>.<layer_index>.<param>".
class ParamRegistry {
public:
    Var create(const std::string& name, std::vector<std::int64_t> shape, std::vector<double> data);
    const std::vector<std::pair<std::string, Var>>& all() const { return params_; }
    Var find(const std::string& name) const;

    std::vector<std::pair<std::string, CheckpointEntry>> snapshot() const;
    // Loads values for every registered parameter; throws on missing/mismatched entries.
    void load(const std::map<std::string, CheckpointEntry>& entries);

private:
    std::vector<std::pair<std::string, Var>> params_;
    std::map<std::string, std::size_t> index_;
};

struct Linear {
    Var weight;  // [in, out]
    Var bias;    // [out]

    Linear() = default;
    Linear(ParamRegistry& reg, const std::string& prefix, std::int64_t in, std::int64_t out, Rng& rng,
           bool zero_init = false);
    Var forward(const Var& x) const { return add_bias(matmul(x, weight), bias); }
};

struct LayerNormBlock {
    Var gamma, beta;

    LayerNormBlock() = default;
    LayerNormBlock(ParamRegistry& reg, const std::string& prefix, std::int64_t dim);
    Var forward(const Var& x) const { return layer_norm(x, gamma, beta); }
};

// Token-wise two-layer MLP with residual and post-norm: y = LN(x + W2 relu(W1 x)).
struct Ffn {
    Linear fc1, fc2;
    LayerNormBlock norm;

    Ffn() = default;
    Ffn(ParamRegistry& reg, const std::string& prefix, std::int64_t dim, std::int64_t hidden, Rng& rng);
    Var forward(const Var& x) const { return norm.forward(add(x, fc2.forward(relu(fc1.forward(x))))); }
};

// Plain regression head, no residual: out = W2 relu(W1 x). Optionally zero-init
// the output layer so the head starts as the identity refinement.
struct Mlp {
    Linear fc1, fc2;

    Mlp() = default;
    Mlp(ParamRegistry& reg, const std::string& prefix, std::int64_t in, std::int64_t hidden, std::int64_t out,
        Rng& rng, bool zero_out = false);
    Var forward(const Var& x) const { return fc2.forward(relu(fc1.forward(x))); }
};

// Multi-head self-attention with residual and post-norm.
struct Mhsa {
    Linear wq, wk, wv, wo;
    LayerNormBlock norm;
    int heads = 1;

    Mhsa() = default;
    Mhsa(ParamRegistry& reg, const std::string& prefix, std::int64_t dim, int heads, Rng& rng);
    Var forward(const Var& tokens) const;  // [M,D] -> [M,D]

    // Same attention restricted to consecutive row blocks of `block` tokens
    // (block-diagonal mask). Lets independent token groups share one pass.
    Var forward_blocks(const Var& tokens, std::int64_t block) const;
};

// Fused softmax attention within consecutive row blocks: rows [b*block,
// (b+1)*block) attend only to each other, per head. q/k/v are [R, D] with
// R divisible by block and D by heads; logits are scaled by `scale`.
Var block_attention(const Var& q, const Var& k, const Var& v, int heads, std::int64_t block, double scale);

// token + positional embedding + per-level scale embedding.
// levels[i] is the pyramid level of token i.
Var add_embeddings(const Var& tokens, const Var& pos_emb, const Var& scale_emb,
                   const std::vector<std::int64_t>& levels);

}  // namespace pave
