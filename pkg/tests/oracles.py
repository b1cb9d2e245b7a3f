"""Independent oracles used by the test suite.

Everything here recomputes results from first principles with its own
numpy code so the tests never trust the code path they are checking.
"""

from __future__ import annotations

import numpy as np

from genreprobe.mlp_head import MlpParams, init_params, sample_dropout_masks


def oracle_forward_pieces(params, x, masks, keep):
    """Plain forward pass, written independently of the package."""
    z1 = x @ params.W1 + params.b1
    h1 = np.maximum(z1, 0.0)
    if masks is not None:
        h1 = h1 * masks[0] / keep
    z2 = h1 @ params.W2 + params.b2
    h2 = np.maximum(z2, 0.0)
    if masks is not None:
        h2 = h2 * masks[1] / keep
    logits = h2 @ params.W3 + params.b3
    return z1, h1, z2, h2, logits


def oracle_loss_from_logits(logits, labels):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    idx = np.arange(logits.shape[-2])
    return -log_probs[..., idx, labels].mean(axis=-1)


def oracle_loss(params, x, labels, masks, dropout_rate):
    keep = 1.0 - dropout_rate
    *_, logits = oracle_forward_pieces(params, x, masks, keep)
    return float(oracle_loss_from_logits(logits, labels))


def naive_fd_entry(params, x, labels, masks, dropout_rate, array_index,
                   flat_index, h=1e-5):
    """Central difference on one parameter entry via two full forwards."""
    arrays = [a.copy() for a in params.arrays()]
    flat = arrays[array_index].reshape(-1)
    orig = flat[flat_index]
    perturbed = MlpParams(*arrays)
    flat[flat_index] = orig + h
    plus = oracle_loss(perturbed, x, labels, masks, dropout_rate)
    flat[flat_index] = orig - h
    minus = oracle_loss(perturbed, x, labels, masks, dropout_rate)
    return (plus - minus) / (2.0 * h)


def fd_gradients(params, x, labels, masks, dropout_rate, h=1e-5):
    """Central-difference gradient for every parameter entry.

    Each perturbed loss is the exact loss at theta +/- h*E: perturbing one
    entry only shifts the affected pre-activation column, so the losses are
    evaluated incrementally instead of via a full forward per entry. The
    test suite cross-checks this against naive_fd_entry on sampled entries.
    """
    keep = 1.0 - dropout_rate
    z1, h1, z2, h2, logits = oracle_forward_pieces(params, x, masks, keep)
    signs = np.array([h, -h])

    def losses_from_logits(stacked_logits):
        return oracle_loss_from_logits(stacked_logits, labels)

    def fd_from_pair(losses):
        return (losses[..., 0] - losses[..., 1]) / (2.0 * h)

    mask1 = masks[0] if masks is not None else np.ones_like(h1)
    mask2 = masks[1] if masks is not None else np.ones_like(h2)
    scale1 = mask1 / keep if masks is not None else mask1
    scale2 = mask2 / keep if masks is not None else mask2

    def through_layer2(dh1_col, j):
        """Losses when h1[:, j] changes by dh1_col[..., b]."""
        # z2 shifts by dh1 * W2[j, :] in every column
        z2_pert = z2 + dh1_col[..., None] * params.W2[j][None, :]
        h2_pert = np.maximum(z2_pert, 0.0) * scale2
        logits_pert = h2_pert @ params.W3 + params.b3
        return losses_from_logits(logits_pert)

    # W1: (dim, H1) entries; z1[:, j] += s * x[:, i]
    dim, H1 = params.W1.shape
    gW1 = np.empty((dim, H1))
    for j in range(H1):
        base = z1[:, j]
        delta = signs[None, :, None] * x.T[:, None, :]  # (dim, 2, B)
        h1_pert = np.maximum(base[None, None, :] + delta, 0.0) * scale1[:, j]
        dh1 = h1_pert - h1[:, j][None, None, :]
        gW1[:, j] = fd_from_pair(through_layer2(dh1, j))

    # b1: z1[:, j] += s
    gb1 = np.empty(H1)
    for j in range(H1):
        h1_pert = np.maximum(z1[:, j][None, :] + signs[:, None], 0.0) * scale1[:, j]
        dh1 = h1_pert - h1[:, j][None, :]
        gb1[j] = fd_from_pair(through_layer2(dh1, j))

    # W2: z2[:, j] += s * h1[:, i]
    H2 = params.W2.shape[1]
    gW2 = np.empty((H1, H2))
    gb2 = np.empty(H2)
    for j in range(H2):
        delta = signs[None, :, None] * h1.T[:, None, :]  # (H1, 2, B)
        z2j = z2[:, j][None, None, :] + delta
        h2j = np.maximum(z2j, 0.0) * scale2[:, j]
        dh2 = h2j - h2[:, j][None, None, :]
        logits_pert = logits[None, None, :, :] + \
            dh2[..., None] * params.W3[j][None, None, None, :]
        gW2[:, j] = fd_from_pair(losses_from_logits(logits_pert))

        z2j_b = z2[:, j][None, :] + signs[:, None]
        h2j_b = np.maximum(z2j_b, 0.0) * scale2[:, j]
        dh2_b = h2j_b - h2[:, j][None, :]
        logits_b = logits[None, :, :] + dh2_b[..., None] * params.W3[j][None, None, :]
        gb2[j] = fd_from_pair(losses_from_logits(logits_b))

    # W3: logits[:, j] += s * h2[:, i]; b3: logits[:, j] += s
    C = params.W3.shape[1]
    gW3 = np.empty((H2, C))
    gb3 = np.empty(C)
    for j in range(C):
        logits_pert = np.broadcast_to(
            logits, (H2, 2) + logits.shape).copy()
        logits_pert[..., j] += signs[None, :, None] * h2.T[:, None, :]
        gW3[:, j] = fd_from_pair(losses_from_logits(logits_pert))

        logits_b = np.broadcast_to(logits, (2,) + logits.shape).copy()
        logits_b[..., j] += signs[:, None]
        gb3[j] = fd_from_pair(losses_from_logits(logits_b))

    return MlpParams(gW1, gb1, gW2, gb2, gW3, gb3)


def random_gradcheck_instance(rng, dropout_rate=0.4, kink_margin=1e-3):
    """Random (params, batch, masks) kept away from relu kinks.

    Finite differences approximate derivatives only where the loss is
    smooth on the whole [theta-h, theta+h] interval; instances with a
    pre-activation within kink_margin of zero are redrawn.
    """
    while True:
        dim = int(rng.integers(2, 9))
        n_classes = int(rng.integers(2, 5))
        batch = int(rng.integers(1, 6))
        params = init_params(dim, n_classes, int(rng.integers(0, 2**31)))
        x = rng.normal(size=(batch, dim))
        labels = rng.integers(0, n_classes, size=batch)
        masks = sample_dropout_masks(rng, batch, dropout_rate)
        z1, _, z2, *_ = oracle_forward_pieces(params, x, masks,
                                              1.0 - dropout_rate)
        if min(np.abs(z1).min(), np.abs(z2).min()) > kink_margin:
            return params, x, labels, masks


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float((np.abs(a - b) / denom).max())


def max_gradient_error(analytic: MlpParams, fd: MlpParams) -> float:
    return max(relative_error(a, b)
               for a, b in zip(analytic.arrays(), fd.arrays()))
