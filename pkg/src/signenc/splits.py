"""Nested leave-one-person-out split generation.

Every ordered pair of distinct signers yields one section: the first signer
is held out for testing, the second for validation, and everyone else
trains. A dataset with n signers therefore produces n*(n-1) sections.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

from .landmarks import DatasetManifest, SampleRef


@dataclass(frozen=True)
class SplitPlan:
    """One section of the nested evaluation protocol."""

    section_id: int
    test_signer: str
    val_signer: str
    train_signers: tuple[str, ...]


def generate_splits(manifest: DatasetManifest) -> list[SplitPlan]:
    """Enumerate all n*(n-1) sections, sorted by (test, val) signer."""
    signers = sorted(manifest.signers)
    if len(signers) < 2:
        raise ValueError(f"leave-one-person-out needs >= 2 signers, got {len(signers)}")
    plans = []
    for test in signers:
        for val in signers:
            if val == test:
                continue
            train = tuple(s for s in signers if s not in (test, val))
            plans.append(
                SplitPlan(
                    section_id=len(plans),
                    test_signer=test,
                    val_signer=val,
                    train_signers=train,
                )
            )
    return plans


def materialize(
    plan: SplitPlan, manifest: DatasetManifest
) -> tuple[list[SampleRef], list[SampleRef], list[SampleRef]]:
    """Partition the manifest's samples into (train, val, test) by signer."""
    known = set(manifest.signers)
    for signer in (plan.test_signer, plan.val_signer, *plan.train_signers):
        if signer not in known:
            raise ValueError(f"split plan references unknown signer {signer!r}")
    train_set = set(plan.train_signers)
    train, val, test = [], [], []
    for ref in manifest.samples:
        if ref.signer == plan.test_signer:
            test.append(ref)
        elif ref.signer == plan.val_signer:
            val.append(ref)
        elif ref.signer in train_set:
            train.append(ref)
        else:
            raise ValueError(
                f"sample {ref.sample_id} belongs to no partition of section "
                f"{plan.section_id}"
            )
    for name, part in (("train", train), ("val", val), ("test", test)):
        if not part:
            warnings.warn(
                f"section {plan.section_id}: {name} partition is empty",
                RuntimeWarning,
                stacklevel=2,
            )
    return train, val, test


def splits_to_json(plans: list[SplitPlan]) -> str:
    doc = [
        {
            "section_id": p.section_id,
            "test": p.test_signer,
            "val": p.val_signer,
            "train": list(p.train_signers),
        }
        for p in plans
    ]
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def save_splits(plans: list[SplitPlan], path: str | Path) -> None:
    Path(path).write_text(splits_to_json(plans))
