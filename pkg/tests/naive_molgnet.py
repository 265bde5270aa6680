# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""Per-node loop version of the backbone forward pass, for cross-checking."""

import math

import numpy as np

GELU_COEFF = 0.044715


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def _gelu(v):
    return 0.5 * v * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (v + GELU_COEFF * v**3)))


def _layer_norm(v, gamma, beta, eps):
    mu = v.mean()
    var = ((v - mu) ** 2).mean()
    return (v - mu) / math.sqrt(var + eps) * gamma + beta


def naive_forward(batch, params):
    config = params.config
    P = {name: tensor.data for name, tensor in params.items()}
    heads, dk = config.heads, config.head_dim
    eps = config.layer_norm_eps

    x = np.array(
        [
            P["embed.atom"][batch.atom_features[i]].sum(axis=0)
            + P["embed.segment"][batch.segment[i]]
            for i in range(batch.num_nodes)
        ]
    )
    e = []
    for a in range(batch.num_arcs):
        if batch.arc_virtual[a]:
            base = P["embed.virtual_edge"]
        else:
            base = P["embed.bond"][batch.arc_features[a]].sum(axis=0)
        e.append(base + P["embed.segment"][batch.arc_segment[a]])
    e = np.array(e)

    h = x
    for layer in range(config.n_layers):
        p = f"layer{layer}"
        if config.reset_hidden_per_layer:
            h = x
        for _ in range(config.steps_per_layer):
            new = np.zeros_like(x)
            for i in range(batch.num_nodes):
                arcs = [a for a in range(batch.num_arcs) if batch.arc_target[a] == i]
                q = P[f"{p}.attn.W_q"] @ x[i]
                keys = [P[f"{p}.attn.W_k"] @ (x[batch.arc_source[a]] + e[a]) for a in arcs]
                values = [
                    P[f"{p}.attn.W_v"] @ (x[batch.arc_source[a]] + e[a]) for a in arcs
                ]
                mixed = np.zeros(config.hidden)
                for k in range(heads):
                    part = slice(k * dk, (k + 1) * dk)
                    scores = np.array([q[part] @ key[part] for key in keys])
                    scores = scores / math.sqrt(dk)
                    weights = np.exp(scores - scores.max())
                    weights = weights / weights.sum()
                    for w, value in zip(weights, values):
                        mixed[part] += w * value[part]
                message = P[f"{p}.attn.W_m"] @ mixed

                u = _layer_norm(
                    x[i] + message, P[f"{p}.norm1.gamma"], P[f"{p}.norm1.beta"], eps
                )
                inner = _gelu(P[f"{p}.ffn.W_1"] @ u + P[f"{p}.ffn.b_1"])
                m = _layer_norm(
                    u + P[f"{p}.ffn.W_2"] @ inner + P[f"{p}.ffn.b_2"],
                    P[f"{p}.norm2.gamma"],
                    P[f"{p}.norm2.beta"],
                    eps,
                )

                g = f"{p}.gru"
                r = _sigmoid(
                    P[f"{g}.W_mr"] @ m + P[f"{g}.b_mr"] + P[f"{g}.W_xr"] @ h[i] + P[f"{g}.b_hr"]
                )
                z = _sigmoid(
                    P[f"{g}.W_mu"] @ m + P[f"{g}.b_mu"] + P[f"{g}.W_xu"] @ h[i] + P[f"{g}.b_hu"]
                )
                c = np.tanh(
                    P[f"{g}.W_in"] @ m
                    + P[f"{g}.b_in"]
                    + r * (P[f"{g}.W_hn"] @ h[i] + P[f"{g}.b_hn"])
                )
                carry = x[i] if config.literal_gru_blend else h[i]
                new[i] = (1.0 - z) * carry + z * c
            x = h = new
    return x
