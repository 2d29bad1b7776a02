import numpy as np

from cfeval.data import EvaluationBundle, LabelOracleOutputs, ReconstructionTriplet


def onehot(idx, k, hot=0.9):
    idx = np.asarray(idx)
    p = np.full((idx.size, k), (1.0 - hot) / (k - 1))
    p[np.arange(idx.size), idx] = hot
    return p


def random_bundle(seed, n=40, d=6, k=3, with_all=True):
    """Bundle with random predictions; roughly half the counterfactuals valid."""
    rng = np.random.default_rng(seed)
    x = rng.random((n, d))
    c = np.clip(x + 0.1 * rng.standard_normal((n, d)), 0.0, 1.0)
    p = rng.integers(0, k, n)
    q = (p + rng.integers(1, k, n)) % k
    pred_cf = np.where(rng.random(n) < 0.6, q, p)
    kw = {}
    if with_all:
        oracle_pred = np.where(rng.random(n) < 0.5, pred_cf, rng.integers(0, k, n))
        kw = dict(
            oracle_probs_counterfactuals=onehot(oracle_pred, k, 0.7),
            reconstructions=ReconstructionTriplet(c * 0.9, c * 0.8 + 0.05, c * 0.95),
            embeddings_reference=rng.standard_normal((60, 3)),
            embeddings_counterfactuals=rng.standard_normal((n, 3)) + 0.3,
            label_oracles=(LabelOracleOutputs("smile", onehot(rng.integers(0, 2, n), 2, 0.8),
                                              onehot(rng.integers(0, 2, n), 2, 0.6)),),
        )
    return EvaluationBundle(
        inputs=x, counterfactuals=c, f_probs_inputs=onehot(p, k), f_probs_counterfactuals=onehot(pred_cf, k, 0.6),
        targets=q, method_name=f"m{seed}", **kw)
