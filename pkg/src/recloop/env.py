"""Synthetic recommendation world and ingestion of small interaction logs.

Users carry a hidden preference vector on the tag simplex; items carry a tag
affinity vector. Clicks are Bernoulli with probability
sigmoid(sharpness * <latent, affinity> + bias). Observable user features are
a noisy mean of the affinities of train-split clicked items, so a policy
must infer preferences from behavior rather than read them off.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    STREAM_ENV,
    InvalidInputError,
    Label,
    ParseError,
    ReferentialError,
    sigmoid,
    substream,
)

DIRICHLET_ALPHA = 0.3
SPLITS = ("train", "valid", "test")


@dataclass(frozen=True)
class EnvConfig:
    n_users: int = 200
    n_items: int = 500
    n_interactions_per_user: int = 30
    k: int = 16
    l: int = 4
    click_sharpness: float = 8.0
    click_bias: float = -2.0
    feature_noise: float = 0.05
    # Logged interactions mix a preference-targeted serving policy with
    # uniform exploration traffic: a (1 - exposure_explore) share of each
    # user's slots is drawn with weight exp(exposure_sharpness * <latent,
    # affinity>), the rest uniformly. exposure_sharpness=0 or
    # exposure_explore=1 reduces to uniform exposure.
    exposure_sharpness: float = 50.0
    exposure_explore: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if min(self.n_users, self.n_items, self.n_interactions_per_user) < 1:
            raise InvalidInputError("all counts must be positive")
        if self.k < 2 or self.k < self.l or self.l < 1:
            raise InvalidInputError("need k >= 2 and k >= l >= 1")
        if self.n_interactions_per_user > self.n_items:
            raise InvalidInputError("cannot draw more distinct items than exist")
        if self.click_sharpness <= 0 or self.feature_noise < 0:
            raise InvalidInputError("click_sharpness must be > 0, feature_noise >= 0")
        if self.exposure_sharpness < 0:
            raise InvalidInputError("exposure_sharpness must be nonnegative")
        if not 0 <= self.exposure_explore <= 1:
            raise InvalidInputError("exposure_explore must lie in [0, 1]")
        if self.seed < 0:
            raise InvalidInputError("seed must be a nonnegative integer")


@dataclass
class UserProfile:
    user_id: int
    features: np.ndarray  # observed, length k, entries in [0, 1]
    history: tuple = ()  # train-split item ids, generation order
    latent: np.ndarray | None = None  # simplex vector, synthetic runs only


@dataclass
class ItemProfile:
    item_id: int
    affinity: np.ndarray  # simplex vector, length k
    features: np.ndarray  # observed; equals affinity here


@dataclass(frozen=True)
class Interaction:
    user_id: int
    item_id: int
    label: Label
    split: str


def _split_sizes(n: int) -> tuple[int, int, int]:
    # 80/10/10 per user, exhaustive; train share within one interaction of 80%.
    n_train = int(round(0.8 * n))
    n_valid = int(round(0.1 * n))
    n_test = n - n_train - n_valid
    return n_train, n_valid, n_test


def _features_from_history(item_features: dict, yes_items, k: int,
                           noise: np.ndarray | None) -> np.ndarray:
    if not yes_items:
        return np.full(k, 1.0 / k)
    mean = np.mean([item_features[i] for i in yes_items], axis=0)
    if noise is not None:
        mean = mean + noise
    return np.clip(mean, 0.0, 1.0)


def make_synthetic(config: EnvConfig):
    """Generate (users, items, interactions) for the configured world.

    Single RNG stream derived from the seed; equal configs give bit-identical
    datasets.
    """
    rng = substream(config.seed, STREAM_ENV)
    k = config.k
    theta = rng.dirichlet(np.full(k, DIRICHLET_ALPHA), size=config.n_users)
    affinity = rng.dirichlet(np.full(k, DIRICHLET_ALPHA), size=config.n_items)

    items = {
        i: ItemProfile(item_id=i, affinity=affinity[i], features=affinity[i].copy())
        for i in range(config.n_items)
    }

    n = config.n_interactions_per_user
    n_train, n_valid, n_test = _split_sizes(n)
    split_seq = ["train"] * n_train + ["valid"] * n_valid + ["test"] * n_test

    users: dict[int, UserProfile] = {}
    interactions: list[Interaction] = []
    n_targeted = int(round((1.0 - config.exposure_explore) * n))
    for u in range(config.n_users):
        if config.exposure_sharpness > 0 and n_targeted > 0:
            weights = np.exp(config.exposure_sharpness * (affinity @ theta[u]))
            weights /= weights.sum()
            targeted = rng.choice(config.n_items, size=n_targeted, replace=False,
                                  p=weights)
            remaining = np.setdiff1d(np.arange(config.n_items), targeted)
            explored = rng.choice(remaining, size=n - n_targeted, replace=False)
            item_ids = np.concatenate([targeted, explored])[rng.permutation(n)]
        else:
            item_ids = rng.choice(config.n_items, size=n, replace=False)
        p_click = sigmoid(config.click_sharpness * affinity[item_ids] @ theta[u]
                          + config.click_bias)
        clicks = rng.random(n) < p_click

        for item_id, click, split in zip(item_ids, clicks, split_seq):
            interactions.append(Interaction(u, int(item_id), Label(int(click)), split))

        train_yes = [int(i) for i, c in zip(item_ids[:n_train], clicks[:n_train]) if c]
        noise = rng.normal(0.0, config.feature_noise, size=k) if train_yes else None
        features = _features_from_history(
            {i: affinity[i] for i in item_ids[:n_train]}, train_yes, k, noise)
        users[u] = UserProfile(
            user_id=u,
            features=features,
            history=tuple(int(i) for i in item_ids[:n_train]),
            latent=theta[u],
        )
    return users, items, interactions


# ---------------------------------------------------------------------------
# File formats: interactions.csv, items.csv, users.json
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(out_dir, users, items, interactions) -> None:
    """Write interactions.csv, items.csv and users.json under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = len(next(iter(items.values())).features)

    with open(out / "items.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("item_id," + ",".join(f"tag_{j}" for j in range(k)) + "\n")
        for item_id in sorted(items):
            row = items[item_id]
            fh.write(str(item_id) + "," + ",".join(_fmt(v) for v in row.features) + "\n")

    with open(out / "interactions.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("user_id,item_id,label,split\n")
        for it in interactions:
            fh.write(f"{it.user_id},{it.item_id},{int(it.label)},{it.split}\n")

    payload = {
        str(uid): {
            "features": [float(v) for v in u.features],
            "latent": None if u.latent is None else [float(v) for v in u.latent],
            "history": [int(i) for i in u.history],
        }
        for uid, u in users.items()
    }
    with open(out / "users.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _load_items_csv(path: Path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if len(header) < 2 or header[0] != "item_id":
            raise ParseError(f"{path}:1: expected header item_id,tag_0,...")
        k = len(header) - 1
        if header[1:] != [f"tag_{j}" for j in range(k)]:
            raise ParseError(f"{path}:1: tag columns must be tag_0..tag_{k - 1}")
        items = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != k + 1:
                raise ParseError(f"{path}:{lineno}: expected {k + 1} fields, got {len(row)}")
            try:
                item_id = int(row[0])
                feats = np.array([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            items[item_id] = ItemProfile(item_id=item_id, affinity=feats.copy(), features=feats)
    return items, k


def load_interactions_csv(path, items_path=None):
    """Load an external interaction log plus its companion items.csv.

    User features are recomputed from train-split Yes items (no noise);
    latent vectors are absent, so teacher-oracle operations are unavailable
    on external data.
    """
    path = Path(path)
    items_path = Path(items_path) if items_path is not None else path.parent / "items.csv"
    items, k = _load_items_csv(items_path)

    interactions: list[Interaction] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if header != ["user_id", "item_id", "label", "split"]:
            raise ParseError(f"{path}:1: expected header user_id,item_id,label,split")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                user_id, item_id = int(row[0]), int(row[1])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if row[2] not in ("0", "1"):
                raise ParseError(f"{path}:{lineno}: label must be 0 or 1, got {row[2]!r}")
            if row[3] not in SPLITS:
                raise ParseError(f"{path}:{lineno}: split must be one of {SPLITS}, got {row[3]!r}")
            if item_id not in items:
                raise ReferentialError(f"{path}:{lineno}: unknown item id {item_id}")
            interactions.append(Interaction(user_id, item_id, Label(int(row[2])), row[3]))

    users: dict[int, UserProfile] = {}
    train_items: dict[int, list[int]] = {}
    train_yes: dict[int, list[int]] = {}
    for it in interactions:
        train_items.setdefault(it.user_id, [])
        train_yes.setdefault(it.user_id, [])
        if it.split == "train":
            train_items[it.user_id].append(it.item_id)
            if it.label is Label.YES:
                train_yes[it.user_id].append(it.item_id)
    for uid in train_items:
        if not train_items[uid]:
            raise ReferentialError(f"user {uid} has no train interaction")
        features = _features_from_history(
            {i: items[i].features for i in train_items[uid]}, train_yes[uid], k, None)
        users[uid] = UserProfile(user_id=uid, features=features,
                                 history=tuple(train_items[uid]), latent=None)
    return users, items, interactions


def load_dataset_dir(data_dir):
    """Load a dataset directory; users.json (if present) restores the stored
    features and latent vectors instead of recomputing them."""
    data_dir = Path(data_dir)
    users, items, interactions = load_interactions_csv(data_dir / "interactions.csv")
    users_json = data_dir / "users.json"
    if users_json.exists():
        with open(users_json, encoding="utf-8") as fh:
            payload = json.load(fh)
        for uid_str, entry in payload.items():
            uid = int(uid_str)
            latent = entry.get("latent")
            users[uid] = UserProfile(
                user_id=uid,
                features=np.array(entry["features"], dtype=float),
                history=tuple(int(i) for i in entry.get("history", ())),
                latent=None if latent is None else np.array(latent, dtype=float),
            )
    return users, items, interactions
