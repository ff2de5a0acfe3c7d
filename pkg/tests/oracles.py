"""Independent brute-force transcriptions used as test oracles.

Everything here is written in plain Python loops over lists and math.exp,
deliberately avoiding the engine's vectorized code paths, so an agreement
between the two is meaningful.  Weights come in as (W, b) pairs with W
indexed [d][c].
"""

import math


def mat_vec_rows(Z, W, b):
    """Row-by-row affine map: out[p][c] = sum_d Z[p][d] * W[d][c] + b[c]."""
    P, d = len(Z), len(Z[0])
    C = len(b)
    out = []
    for p in range(P):
        row = []
        for c in range(C):
            acc = b[c]
            for k in range(d):
                acc += Z[p][k] * W[k][c]
            row.append(acc)
        out.append(row)
    return out


def softmax_over_proposals(B):
    """Per-class softmax down each column of B."""
    P, C = len(B), len(B[0])
    out = [[0.0] * C for _ in range(P)]
    for c in range(C):
        col = [B[p][c] for p in range(P)]
        m = max(col)
        exps = [math.exp(x - m) for x in col]
        total = sum(exps)
        for p in range(P):
            out[p][c] = exps[p] / total
    return out


def softmax_over_classes(A):
    """Per-proposal softmax along each row of A."""
    out = []
    for row in A:
        m = max(row)
        exps = [math.exp(x - m) for x in row]
        total = sum(exps)
        out.append([e / total for e in exps])
    return out


def l2_unit(v, eps):
    norm = math.sqrt(sum(x * x for x in v))
    scale = max(norm, eps)
    return [x / scale for x in v]


def two_stream_modality(Z, cls_W, cls_b, loc_W, loc_b, eps):
    """One modality of the main model: returns (normalized scores, D)."""
    A = mat_vec_rows(Z, cls_W, cls_b)
    B = mat_vec_rows(Z, loc_W, loc_b)
    S = softmax_over_proposals(B)
    P, C = len(A), len(A[0])
    D = [[A[p][c] * S[p][c] for c in range(C)] for p in range(P)]
    pooled = [sum(D[p][c] for p in range(P)) for c in range(C)]
    return l2_unit(pooled, eps), D


def two_stream_phi(modality_inputs, eps):
    """Fused scores: sum of per-modality normalized vectors.

    ``modality_inputs`` is a list of (Z, cls_W, cls_b, loc_W, loc_b) tuples.
    Returns (phi, [D per modality]).
    """
    C = len(modality_inputs[0][2])
    phi = [0.0] * C
    ds = []
    for Z, cw, cb, lw, lb in modality_inputs:
        normalized, D = two_stream_modality(Z, cw, cb, lw, lb, eps)
        phi = [a + b for a, b in zip(phi, normalized)]
        ds.append(D)
    return phi, ds


def lse(values):
    m = max(values)
    return m + math.log(sum(math.exp(x - m) for x in values) / len(values))


def one_stream_phi(modality_inputs, eps):
    """One-stream baseline: LSE-pooled classification scores per modality."""
    C = len(modality_inputs[0][2])
    phi = [0.0] * C
    for Z, cw, cb in modality_inputs:
        A = mat_vec_rows(Z, cw, cb)
        pooled = [lse([A[p][c] for p in range(len(A))]) for c in range(C)]
        phi = [a + b for a, b in zip(phi, l2_unit(pooled, eps))]
    return phi


def wsddn_phi(Z, cls_W, cls_b, loc_W, loc_b, clamp):
    """WSDDN-type scores: row-softmaxed A gated by column-softmaxed B."""
    A = mat_vec_rows(Z, cls_W, cls_b)
    B = mat_vec_rows(Z, loc_W, loc_b)
    Sr = softmax_over_classes(A)
    Sc = softmax_over_proposals(B)
    P, C = len(A), len(A[0])
    D = [[Sr[p][c] * Sc[p][c] for c in range(C)] for p in range(P)]
    phi = [sum(D[p][c] for p in range(P)) for c in range(C)]
    return [min(max(x, clamp), 1.0 - clamp) for x in phi], D


def f1_binary(pairs):
    """F1 from (predicted, actual) boolean pairs, zero when undefined."""
    tp = sum(1 for p, a in pairs if p and a)
    fp = sum(1 for p, a in pairs if p and not a)
    fn = sum(1 for p, a in pairs if not p and a)
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


def best_f1_by_enumeration(scores, positives):
    """Max achievable F1 for the rule 'predict iff score >= t' over all t.

    Enumerates every distinct score as a threshold plus one above the max,
    which covers every possible prediction set for the >= rule.
    """
    candidates = sorted(set(scores)) + [max(scores) + 1.0]
    best = 0.0
    for t in candidates:
        best = max(best, f1_binary([(s >= t, a) for s, a in zip(scores, positives)]))
    return best


def micro_prf(pred_rows, label_rows):
    """Micro precision/recall/F1 by explicit global counting."""
    tp = fp = fn = 0
    for preds, labels in zip(pred_rows, label_rows):
        for p, y in zip(preds, labels):
            if p and y == 1:
                tp += 1
            elif p and y == -1:
                fp += 1
            elif not p and y == 1:
                fn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def model_head_inputs(model, bag, modality):
    """Engine-to-oracle adapter: embedded features and head weights as lists.

    Uses the model's embedding (evaluation mode) so the oracle covers the
    scoring head and fusion; for oracle tests the towers are built without
    hidden layers, making the embedding the identity.
    """
    tower = model.towers[modality]
    feats = bag.visual if modality == "visual" else bag.audio
    import numpy as np

    Z = tower.embed(np.asarray(feats, dtype=model.dtype), training=False, rng=None).Z
    head = tower.head
    out = [Z.tolist(), head.cls.W.tolist(), head.cls.b.tolist()]
    if head.loc is not None:
        out += [head.loc.W.tolist(), head.loc.b.tolist()]
    return out
