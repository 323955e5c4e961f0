"""Metrics, leakage profiles, the FFD inference attack and a permutation test for key indistinguishability."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .bucketizer import BucketSet
from .core import Dataset, Metrics, Params, to_tsv
from .engine import layout_for, query
from .mapper import CachedMap, MapConfig
from .outsource import RECORDS_FILE, INDEX_FILE, ClientState, OutsourcedBundle, serialize

# per-record framing in records.bin: RID (8) + length (4)
_RECORD_HEADER = 12


# -- metrics ----------------------------------------------------------------------------

def _client_bytes(client: ClientState) -> int:
    state = {"n": client.n, "f": client.f, "bucket_size": client.bucket_size,
             "key": client.key.hex(), "hash": client.hash_name, "salt": client.salt.hex(),
             "record_width": client.record_width, "qa": str(client.qa), "l_max": client.l_max}
    return len(json.dumps(state, indent=2, sort_keys=True)) + 1


def compute_metrics(dataset: Dataset, bundle: OutsourcedBundle, client: ClientState,
                    sample_queries: Iterable[bytes] | None = None) -> Metrics:
    """Logical and physical amplification of one outsourced setup.

    ``sa_actual`` counts distinct ciphertexts, so a record shared by two
    buckets is stored once. Byte ratios are relative to the encrypted
    dataset alone (one framed ciphertext per real record, no index).
    When ``sample_queries`` are given, ``qa_actual`` is measured from the
    fetched volume instead of derived from the layout.
    """
    size, l_max = dataset.size, dataset.l_max
    qa = client.f * client.bucket_size / l_max
    if sample_queries is not None:
        fetched = [query(client, bundle, k).fetched_count for k in sample_queries]
        if fetched:
            qa = float(np.mean(fetched)) / l_max
    files = serialize(bundle)
    enc_dataset = size * (_RECORD_HEADER + bundle.meta["ciphertext_length"])
    server = len(files[RECORDS_FILE]) + len(files[INDEX_FILE])
    client_side = len(to_tsv(client.stash).encode()) + _client_bytes(client)
    return Metrics(
        qa_actual=qa,
        sa_actual=len(bundle.record_store) / size,
        sr=len(client.stash) / size,
        csa=client_side / enc_dataset,
        ssa=server / enc_dataset,
    )


def bucket_metrics(bs: BucketSet, dataset: Dataset) -> Metrics:
    """Logical metrics straight from buckets, skipping encryption; used by sweeps."""
    size = dataset.size
    return Metrics(
        qa_actual=bs.map_cfg.f * bs.bucket_size / dataset.l_max,
        sa_actual=len(bs.stored_records()) / size,
        sr=len(bs.stash) / size,
    )


# -- leakage ----------------------------------------------------------------------------

@dataclass
class LeakageProfile:
    qeq: np.ndarray
    rlen: list[int]
    mrlen: int
    dsize: int

    def as_dict(self) -> dict:
        return {"qeq": self.qeq.astype(int).tolist(), "rlen": self.rlen,
                "mrlen": self.mrlen, "dsize": self.dsize}


def leakage(dataset: Dataset, query_keys: Sequence[bytes]) -> LeakageProfile:
    """What the server may learn from a query sequence: key equality, volumes, L_max, |D|."""
    t = len(query_keys)
    qeq = np.array([[a == b for b in query_keys] for a in query_keys], dtype=bool).reshape(t, t)
    counts = dataset.counts
    return LeakageProfile(qeq, [counts.get(k, 0) for k in query_keys], dataset.l_max, dataset.size)


# -- FFD inference attack ---------------------------------------------------------------

def ffd_buckets(counts: dict[bytes, int], capacity: int) -> list[list[bytes]]:
    """First-fit decreasing: keys by volume (ties by key), each into the first bucket with room."""
    bins: list[list[bytes]] = []
    free: list[int] = []
    for key in sorted(counts, key=lambda k: (-counts[k], k)):
        vol = counts[key]
        for i, room in enumerate(free):
            if room >= vol:
                bins[i].append(key)
                free[i] -= vol
                break
        else:
            bins.append([key])
            free.append(capacity - vol)
    return bins


@dataclass
class AttackReport:
    per_query_candidates: list[list[str]]
    accuracy: float
    chance: float = 0.0
    trials: int = 0

    def as_dict(self) -> dict:
        return {"per_query_candidates": self.per_query_candidates, "accuracy": self.accuracy,
                "chance": self.chance, "trials": self.trials}


def ffd_attack_demo(dataset: Dataset, queries: Sequence[bytes]) -> AttackReport:
    """The server stores FFD buckets; the adversary re-runs FFD on the public histogram.

    A fetched bucket narrows the query to the keys packed into it. Accuracy
    is the mean probability of naming the right key when guessing uniformly
    inside the candidate set.
    """
    counts = dict(dataset.counts)
    if len(counts) > 20:
        raise ValueError("the FFD demo reasons exhaustively and expects at most 20 keys")
    bins = ffd_buckets(counts, dataset.l_max)
    home = {k: i for i, b in enumerate(bins) for k in b}
    # adversary side: same algorithm, same histogram, so the same packing
    adv_bins = ffd_buckets(counts, dataset.l_max)
    candidates, hits = [], []
    for q in queries:
        observed = home[q]
        cand = sorted(adv_bins[observed])
        candidates.append([k.decode() for k in cand])
        hits.append(1 / len(cand) if q in cand else 0.0)
    return AttackReport(candidates, float(np.mean(hits)) if hits else 0.0)


def veil_attack_demo(dataset: Dataset, fanout: int, setups: int = 100, trials: int = 200,
                     seed: int = 0, sa: float = 1.2) -> AttackReport:
    """The same histogram-knowing adversary against salted, randomized VEIL buckets.

    Every bucket is full and every query fetches ``fanout`` buckets, so the
    adversary falls back to evaluating the public map without the client's
    salt and picks the equal-volume candidate whose ids best overlap the
    observed fetch (random tie-break).
    """
    counts = dict(dataset.counts)
    groups: dict[int, list[bytes]] = defaultdict(list)
    for k, c in counts.items():
        groups[c].append(k)
    targets = [k for k in counts if len(groups[counts[k]]) > 1]
    if not targets:
        raise ValueError("need at least two keys of equal volume")
    layout = layout_for(Params(qa=1, sa=sa, fanout=fanout), dataset)
    guess_map = CachedMap(MapConfig(layout.bucket_count, fanout))
    rng = np.random.Generator(np.random.PCG64(seed))
    hits = chance = 0.0
    for s in range(setups):
        salt = np.random.Generator(np.random.PCG64([seed, s])).bytes(16)
        real = CachedMap(MapConfig(layout.bucket_count, fanout, salt=salt))
        for _ in range(trials):
            target = targets[rng.integers(len(targets))]
            observed = set(real(target))
            cand = groups[counts[target]]
            scores = np.array([len(observed & set(guess_map(k))) for k in cand])
            best = np.flatnonzero(scores == scores.max())
            guess = cand[best[rng.integers(len(best))]]
            hits += guess == target
            chance += 1 / len(cand)
    total = setups * trials
    return AttackReport([], hits / total, chance / total, total)


# -- indistinguishability ---------------------------------------------------------------

SetupFn = Callable[[int], Callable[[bytes], list[int]]]


def veil_setup_fn(n: int, f: int, seed: int = 0) -> SetupFn:
    """Independent VEIL setups: trial ``t`` gets a salt drawn from the stream ``(seed, t)``."""
    def make(trial: int):
        salt = np.random.Generator(np.random.PCG64([seed, trial])).bytes(16)
        return CachedMap(MapConfig(n, f, salt=salt))
    return make


def ffd_setup_fn(counts: dict[bytes, int], capacity: int) -> SetupFn:
    """Deterministic FFD placement; identical in every trial."""
    bins = ffd_buckets(counts, capacity)
    home = {k: [i] for i, b in enumerate(bins) for k in b}
    return lambda trial: home.__getitem__


def _tv_stats(diff: np.ndarray, signs: np.ndarray, norm: float) -> np.ndarray:
    return 0.5 * np.abs(signs @ diff).sum(axis=1) / norm


def vsr_permutation_test(setup_fn: SetupFn, k1: bytes, k2: bytes, trials: int = 1000,
                         permutations: int = 999, seed: int = 0) -> float:
    """Paired permutation test of equal bucket-id distributions for two keys.

    Each trial builds a fresh setup and records the bucket-id histogram of
    both keys. The statistic is the total-variation distance between the
    pooled histograms; permutations swap the two labels within a trial.
    Returns ``(1 + #{T_perm >= T_obs}) / (1 + permutations)``.
    """
    rows1, rows2 = [], []
    for t in range(trials):
        mapping = setup_fn(t)
        rows1.append(mapping(k1))
        rows2.append(mapping(k2))
    width = 1 + max(max(r) for r in rows1 + rows2)
    c1 = np.zeros((trials, width))
    c2 = np.zeros((trials, width))
    for t in range(trials):
        np.add.at(c1[t], rows1[t], 1)
        np.add.at(c2[t], rows2[t], 1)
    diff = c1 - c2
    norm = c1.sum()
    observed = _tv_stats(diff, np.ones((1, trials)), norm)[0]
    rng = np.random.Generator(np.random.PCG64(seed))
    signs = rng.choice(np.array([-1.0, 1.0]), size=(permutations, trials))
    perm = _tv_stats(diff, signs, norm)
    return float((1 + np.count_nonzero(perm >= observed - 1e-12)) / (1 + permutations))


# -- report -----------------------------------------------------------------------------

@dataclass
class Report:
    metrics: Metrics
    leakage: LeakageProfile
    attack: AttackReport | None
    vsr_p_value: float | None
    vsr_trials: int
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "metrics": self.metrics.as_dict(),
            "leakage": self.leakage.as_dict(),
            "attack": self.attack.as_dict() if self.attack else None,
            "vsr": {"p_value": self.vsr_p_value, "trials": self.vsr_trials},
            "notes": self.notes,
        }


def analyze(dataset: Dataset, bundle: OutsourcedBundle, client: ClientState,
            queries: Sequence[bytes], vsr_trials: int = 1000, seed: int = 0) -> Report:
    notes = ["VSR is checked by a permutation test on bucket ids across independent setups"]
    attack = None
    if len(dataset.keys) <= 20:
        attack = ffd_attack_demo(dataset, [q for q in queries if q in dataset.keys])
    else:
        notes.append("FFD attack skipped: more than 20 keys")
    unqueried = sorted(dataset.keys - set(queries))
    p_value = None
    if len(unqueried) >= 2:
        fn = veil_setup_fn(client.n, client.f, seed)
        p_value = vsr_permutation_test(fn, unqueried[0], unqueried[1], vsr_trials, seed=seed)
    else:
        notes.append("VSR test skipped: fewer than two never-queried keys")
    return Report(compute_metrics(dataset, bundle, client, queries), leakage(dataset, queries),
                  attack, p_value, vsr_trials, notes)
