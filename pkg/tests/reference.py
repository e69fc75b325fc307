"""Independent scalar reference implementations used as test oracles.

Everything here is written as naive per-pixel loops over Python floats,
deliberately sharing no code with the package implementations.
"""

from __future__ import annotations

import math

import numpy as np


def ref_length_term(pred: np.ndarray, epsilon: float) -> float:
    h, w = pred.shape
    total = 0.0
    for i in range(h - 1):
        for j in range(w - 1):
            dx = float(pred[i + 1, j]) - float(pred[i, j])
            dy = float(pred[i, j + 1]) - float(pred[i, j])
            total += math.sqrt(abs(dx * dx + dy * dy) + epsilon)
    return total


def ref_area_term(pred: np.ndarray, gt: np.ndarray) -> float:
    h, w = pred.shape
    inside = 0.0
    outside = 0.0
    for i in range(h):
        for j in range(w):
            p = float(pred[i, j])
            g = float(gt[i, j])
            inside += p * (1.0 - g) ** 2
            outside += (1.0 - p) * g**2
    return abs(inside) + abs(outside)


def ref_ac_loss(pred: np.ndarray, gt: np.ndarray, lam: float,
                epsilon: float) -> float:
    return ref_length_term(pred, epsilon) + lam * ref_area_term(pred, gt)


def ref_bce_loss(pred: np.ndarray, gt: np.ndarray, clamp: float) -> float:
    h, w = pred.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            p = min(max(float(pred[i, j]), clamp), 1.0 - clamp)
            g = float(gt[i, j])
            total += -(g * math.log(p) + (1.0 - g) * math.log(1.0 - p))
    return total / (h * w)


def ref_dice_loss(pred: np.ndarray, gt: np.ndarray, smooth: float) -> float:
    h, w = pred.shape
    inter = 0.0
    total = 0.0
    for i in range(h):
        for j in range(w):
            p = float(pred[i, j])
            g = float(gt[i, j])
            inter += p * g
            total += p + g
    if smooth == 0.0 and total == 0.0:
        return 0.0
    return 1.0 - (2.0 * inter + smooth) / (total + smooth)


def ref_combined_loss(pred: np.ndarray, gt: np.ndarray, lam: float,
                      alpha: float, beta: float, gamma: float, epsilon: float,
                      clamp: float, smooth: float) -> float:
    pixel = alpha * ref_bce_loss(pred, gt, clamp) + (1.0 - alpha) * ref_dice_loss(
        pred, gt, smooth
    )
    if gamma == 0.0:
        return beta * pixel
    return gamma * ref_ac_loss(pred, gt, lam, epsilon) + beta * pixel


def ref_binarize(pred: np.ndarray, threshold: float) -> np.ndarray:
    h, w = pred.shape
    out = np.zeros((h, w), np.uint8)
    for i in range(h):
        for j in range(w):
            if float(pred[i, j]) >= threshold:
                out[i, j] = 1
    return out


def ref_confusion(pred: np.ndarray, gt: np.ndarray) -> tuple[int, int, int, int]:
    tp = fp = fn = tn = 0
    h, w = pred.shape
    for i in range(h):
        for j in range(w):
            p = int(pred[i, j])
            g = int(gt[i, j])
            if p and g:
                tp += 1
            elif p and not g:
                fp += 1
            elif not p and g:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def ref_hausdorff(pred: np.ndarray, gt: np.ndarray) -> float:
    """All-pairs O(|P|*|G|) directed distances, symmetrized."""
    p_pts = [(i, j) for i in range(pred.shape[0]) for j in range(pred.shape[1])
             if pred[i, j]]
    g_pts = [(i, j) for i in range(gt.shape[0]) for j in range(gt.shape[1])
             if gt[i, j]]
    assert p_pts and g_pts, "oracle requires nonempty masks"

    def directed(src, dst):
        worst = 0.0
        for a in src:
            best = math.inf
            for b in dst:
                d = math.hypot(a[0] - b[0], a[1] - b[1])
                if d < best:
                    best = d
            if best > worst:
                worst = best
        return worst

    return max(directed(p_pts, g_pts), directed(g_pts, p_pts))


def ref_attention_coefficients(
    skip: np.ndarray,
    gate: np.ndarray,
    w_skip: np.ndarray,
    b_skip: np.ndarray,
    w_gate: np.ndarray,
    b_gate: np.ndarray,
    w_head: np.ndarray,
    b_head: float,
) -> np.ndarray:
    """Scalar evaluation of sigmoid(head(relu(proj_g(g) + proj_x(x)))) for
    1x1 projections. skip: (Cs, H, W), gate: (Cg, H, W) already resampled,
    w_skip: (Ci, Cs), w_gate: (Ci, Cg), w_head: (Ci,)."""
    ci = w_skip.shape[0]
    h, w = skip.shape[1:]
    coeff = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            pre = 0.0
            for c in range(ci):
                sx = b_skip[c] + sum(
                    w_skip[c, k] * skip[k, y, x] for k in range(skip.shape[0])
                )
                gx = b_gate[c] + sum(
                    w_gate[c, k] * gate[k, y, x] for k in range(gate.shape[0])
                )
                pre += w_head[c] * max(0.0, sx + gx)
            coeff[y, x] = 1.0 / (1.0 + math.exp(-(pre + b_head)))
    return coeff
