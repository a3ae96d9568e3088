"""Group summaries of a solved counterfactual problem."""

import numpy as np


def extract_groups(solution, classifier=None, flow=None):
    """Per-group records ordered by descending member count.

    Empty groups are omitted. The normalized mean shift divides each group's
    mean shift vector by the average absolute shift magnitude across its
    features, which is the scale used for group recommendation plots.
    When a classifier (and optionally a flow) is given, per-group metrics are
    attached.
    """
    groups = []
    ids, counts = np.unique(solution.group_index, return_counts=True)
    order = np.lexsort((ids, -counts))
    shifts = solution.counterfactuals - solution.factuals
    for pos in order:
        gid = int(ids[pos])
        members = np.nonzero(solution.group_index == gid)[0]
        mean_shift = shifts[members].mean(axis=0)
        scale = np.abs(mean_shift).mean()
        normalized = mean_shift / scale if scale > 0 else np.zeros_like(mean_shift)
        record = {
            "group_id": gid,
            "member_indices": members.tolist(),
            "size": int(counts[pos]),
            "base_shift": solution.base_shifts[gid].copy()
            if gid < solution.base_shifts.shape[0] else mean_shift,
            "mean_magnitude": float(solution.magnitudes[members].mean()),
            "mean_shift": mean_shift,
            "normalized_mean_shift": normalized,
        }
        if classifier is not None:
            record["validity"] = float(solution.valid[members].mean())
            record["proximity_mean"] = float(solution.l2[members].mean())
            record["prob_plausibility"] = float(solution.plausible[members].mean())
            if np.isfinite(solution.log_density[members]).all():
                record["log_density_mean"] = float(
                    solution.log_density[members].mean()
                )
        groups.append(record)
    return groups
