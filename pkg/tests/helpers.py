"""Independent oracles shared by the test modules.

Everything here is written with plain Python loops and scalar math on
purpose: these functions double-check the vectorized implementations in the
package and must not share code with them.
"""

import math

import numpy as np


def finite_difference(f, params, step=1e-5):
    """Central-difference gradients of scalar f() w.r.t. a name -> Tensor dict.

    `f` takes no arguments and evaluates the forward value from the current
    tensor contents. Entries are perturbed in place one at a time.
    """
    out = {}
    for name, p in params.items():
        flat = p.values.reshape(-1)
        grad = np.zeros_like(flat)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = f()
            flat[i] = keep - step
            down = f()
            flat[i] = keep
            grad[i] = (up - down) / (2.0 * step)
        out[name] = grad.reshape(p.values.shape)
    return out


def gradient_close(analytic, numeric, rel=1e-4, floor=1e-7):
    """True when |a - n| <= max(rel * max(|a|, |n|), floor) everywhere."""
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    tol = np.maximum(rel * np.maximum(np.abs(a), np.abs(n)), floor)
    return bool((np.abs(a - n) <= tol).all())


def pairwise_auc(scored):
    """O(n^2) AUC over (score, label) pairs; ties between classes count 0.5."""
    pos = [s for s, y in scored if y == 1]
    neg = [s for s, y in scored if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def direct_ndcg(ranked_labels, k):
    """NDCG@k of one user's ranked binary labels, straight from the formula."""
    dcg = 0.0
    for rank, label in enumerate(ranked_labels[:k], start=1):
        dcg += label / math.log2(rank + 1)
    n_pos = sum(ranked_labels)
    idcg = 0.0
    for rank in range(1, min(k, n_pos) + 1):
        idcg += 1.0 / math.log2(rank + 1)
    if idcg == 0.0:
        return None
    return dcg / idcg


def brute_force_coitem_edges(neighbor_sets, threshold):
    """All-pairs co-item edges: (i, j) with i < j and |N_i & N_j| > threshold."""
    n = len(neighbor_sets)
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            if len(neighbor_sets[i] & neighbor_sets[j]) > threshold:
                edges.add((i, j))
    return edges


def scalar_gat_head(vectors, neighbors, weight, attn, slope):
    """One attention head over one graph, scalar loops only.

    vectors: list of node feature lists; neighbors: list of neighbor-index
    lists (already including a self loop when the node is isolated);
    weight: d_out x d_in nested lists; attn: flat list of length 2*d_out.
    Returns (alpha, messages): alpha[i][j] for j in neighbors[i], and the
    per-node aggregated message vectors before any nonlinearity.
    """
    d_out = len(weight)
    d_in = len(weight[0])
    n = len(vectors)
    transformed = []
    for i in range(n):
        row = []
        for r in range(d_out):
            acc = 0.0
            for c in range(d_in):
                acc += weight[r][c] * vectors[i][c]
            row.append(acc)
        transformed.append(row)

    def leaky(v):
        return v if v >= 0 else slope * v

    alpha = []
    messages = []
    for i in range(n):
        logits = []
        for j in neighbors[i]:
            e = 0.0
            for r in range(d_out):
                e += attn[r] * transformed[i][r]
                e += attn[d_out + r] * transformed[j][r]
            logits.append(leaky(e))
        m = max(logits)
        exps = [math.exp(v - m) for v in logits]
        z = sum(exps)
        weights = [v / z for v in exps]
        alpha.append(weights)
        agg = [0.0] * d_out
        for w, j in zip(weights, neighbors[i]):
            for r in range(d_out):
                agg[r] += w * transformed[j][r]
        messages.append(agg)
    return alpha, messages


def scalar_elu(v):
    return v if v >= 0 else math.exp(v) - 1.0


def scalar_gat_layer(vectors, neighbors, heads, slope, mode):
    """Full GAT layer via scalar loops; heads is a list of (weight, attn)."""
    outputs = []
    per_head = [scalar_gat_head(vectors, neighbors, w, a, slope)[1] for w, a in heads]
    n = len(vectors)
    for i in range(n):
        if mode == "concat":
            row = []
            for msgs in per_head:
                row.extend(scalar_elu(v) for v in msgs[i])
        else:
            d_out = len(per_head[0][0])
            row = []
            for r in range(d_out):
                acc = sum(msgs[i][r] for msgs in per_head)
                row.append(scalar_elu(acc / len(per_head)))
        outputs.append(row)
    return outputs


def scalar_self_attention(rows, wq, wk, wv, wo, n_heads):
    """Multi-head self-attention via scalar loops.

    rows: z x d nested lists; wq/wk/wv: per-head d x d_hide nested lists;
    wo: d x d. Returns (output rows, per-head attention matrices).
    """
    z = len(rows)
    d = len(rows[0])
    d_hide = len(wq[0][0])

    def matvec_rows(mat, w):
        out = []
        for row in mat:
            prod = []
            for c in range(len(w[0])):
                acc = 0.0
                for r in range(len(w)):
                    acc += row[r] * w[r][c]
                prod.append(acc)
            out.append(prod)
        return out

    head_outs = []
    head_weights = []
    for h in range(n_heads):
        q = matvec_rows(rows, wq[h])
        k = matvec_rows(rows, wk[h])
        v = matvec_rows(rows, wv[h])
        attn = []
        for i in range(z):
            logits = []
            for j in range(z):
                acc = 0.0
                for c in range(d_hide):
                    acc += q[i][c] * k[j][c]
                logits.append(acc / math.sqrt(d_hide))
            m = max(logits)
            exps = [math.exp(x - m) for x in logits]
            s = sum(exps)
            attn.append([x / s for x in exps])
        out = []
        for i in range(z):
            row = [0.0] * d_hide
            for j in range(z):
                for c in range(d_hide):
                    row[c] += attn[i][j] * v[j][c]
            out.append(row)
        head_outs.append(out)
        head_weights.append(attn)

    concat = [[] for _ in range(z)]
    for out in head_outs:
        for i in range(z):
            concat[i].extend(out[i])
    final = []
    for i in range(z):
        row = []
        for c in range(d):
            acc = 0.0
            for r in range(d):
                acc += concat[i][r] * wo[r][c]
            row.append(acc)
        final.append(row)
    return final, head_weights


def scalar_ranking_loss(positive_score, negative_scores):
    """Plain -log(exp(s+) / (exp(s+) + sum exp(s-))), no stabilization."""
    num = math.exp(positive_score)
    den = num + sum(math.exp(s) for s in negative_scores)
    return -math.log(num / den)
