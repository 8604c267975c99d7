"""Hand topologies and the graph propagation matrix."""
import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

AXES = ("x", "y", "z")
REINTERHAND_FINGERS = ("Thumb", "Index", "Middle", "Ring", "Pinky")


@dataclass(frozen=True)
class HandSkeleton:
    joints: tuple
    edges: tuple
    layout: str = "custom"

    def __post_init__(self):
        if len(set(self.joints)) != len(self.joints):
            raise ContractError("joint names must be unique")
        known = set(self.joints)
        for a, b in self.edges:
            for j in (a, b):
                if j not in known:
                    raise ContractError(f"edge ({a}, {b}) references unknown joint {j!r}")
            if a == b:
                raise ContractError(f"self-edge on joint {a!r}")

    @property
    def n_joints(self):
        return len(self.joints)

    @property
    def n_channels(self):
        return 3 * len(self.joints)

    def index(self, joint):
        return self.joints.index(joint)

    def channel_names(self):
        return [f"{j}_{a}" for j in self.joints for a in AXES]

    def to_json(self):
        return json.dumps({"layout": self.layout, "joints": list(self.joints),
                           "edges": [list(e) for e in self.edges]})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(tuple(d["joints"]), tuple(tuple(e) for e in d["edges"]), d.get("layout", "custom"))


def _vrhands14():
    # thumb J11-J12, fingers 2..5 each Ji1-Ji2-Ji3; no palm node
    joints = ["J11", "J12"] + [f"J{i}{j}" for i in range(2, 6) for j in (1, 2, 3)]
    edges = [("J11", "J12")]
    for i in range(2, 6):
        edges += [(f"J{i}1", f"J{i}2"), (f"J{i}2", f"J{i}3")]
    return HandSkeleton(tuple(joints), tuple(edges), "vrhands14")


def _reinterhand21():
    joints = ["Wrist"] + [f"{f}_{k}" for f in REINTERHAND_FINGERS for k in (1, 2, 3, 4)]
    edges = []
    for f in REINTERHAND_FINGERS:
        chain = ["Wrist"] + [f"{f}_{k}" for k in (1, 2, 3, 4)]
        edges += list(zip(chain[:-1], chain[1:]))
    return HandSkeleton(tuple(joints), tuple(edges), "reinterhand21")


LAYOUTS = {"vrhands14": _vrhands14, "reinterhand21": _reinterhand21}


def build_skeleton(layout="vrhands14", joints=None, edges=()):
    """Named layout, or a custom one when ``joints`` is given."""
    if joints is not None:
        return HandSkeleton(tuple(joints), tuple(tuple(e) for e in edges), "custom")
    if layout not in LAYOUTS:
        raise ContractError(f"unknown skeleton layout {layout!r}; choose from {sorted(LAYOUTS)}")
    return LAYOUTS[layout]()


def adjacency(skel):
    A = np.zeros((skel.n_joints, skel.n_joints))
    for a, b in skel.edges:
        i, j = skel.index(a), skel.index(b)
        A[i, j] = A[j, i] = 1.0
    return A


def normalized_adjacency(skel, raw=False):
    """``D^-1/2 (A + I) D^-1/2``, or the bare 0/1 adjacency when ``raw``."""
    A = adjacency(skel)
    if raw:
        return A
    A_hat = A + np.eye(skel.n_joints)
    d = 1.0 / np.sqrt(A_hat.sum(axis=1))
    return A_hat * d[:, None] * d[None, :]
