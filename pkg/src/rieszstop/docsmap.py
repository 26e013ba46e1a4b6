"""Machine-checkable map between theory anchors and the code implementing them.

Implementation sites carry an ``@anchored("<anchor-id>")`` marker.  The
manifest (``paper_map.json`` at the repository root) lists every anchor id
with its target ``module.name``; :func:`check_manifest` verifies that the
two agree one-to-one.
"""

from __future__ import annotations

import importlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

MANIFEST_NAME = "paper_map.json"

# anchor id -> "module.qualname"
_REGISTRY: dict[str, str] = {}
_DUPLICATES: list[tuple[str, str, str]] = []

_MODULES = (
    "model",
    "special",
    "kernels",
    "riesz",
    "perpetual",
    "invest2d",
    "amput",
    "verify",
)


def anchored(anchor_id: str):
    """Mark a function or class as the implementation site of ``anchor_id``."""

    def deco(obj):
        mod = obj.__module__.rsplit(".", 1)[-1]
        target = f"{mod}.{obj.__qualname__}"
        prev = _REGISTRY.get(anchor_id)
        if prev is not None and prev != target:
            _DUPLICATES.append((anchor_id, prev, target))
        _REGISTRY[anchor_id] = target
        return obj

    return deco


def registry() -> dict[str, str]:
    for mod in _MODULES:
        importlib.import_module(f"{__package__}.{mod}")
    return dict(_REGISTRY)


@dataclass
class ManifestReport:
    ok: bool
    missing_in_code: list[str] = field(default_factory=list)
    missing_in_manifest: list[str] = field(default_factory=list)
    wrong_target: list[tuple[str, str, str]] = field(default_factory=list)
    unresolvable: list[str] = field(default_factory=list)
    duplicate_targets: list[str] = field(default_factory=list)
    duplicate_sites: list[tuple[str, str, str]] = field(default_factory=list)

    def diff(self) -> str:
        lines = []
        for a in self.missing_in_code:
            lines.append(f"- {a}: in manifest, no code site")
        for a in self.missing_in_manifest:
            lines.append(f"+ {a}: annotated in code, absent from manifest")
        for a, want, got in self.wrong_target:
            lines.append(f"~ {a}: manifest says {want}, code says {got}")
        for t in self.unresolvable:
            lines.append(f"? {t}: target does not exist")
        for t in self.duplicate_targets:
            lines.append(f"! {t}: target of more than one anchor")
        for a, p, q in self.duplicate_sites:
            lines.append(f"! {a}: annotated at both {p} and {q}")
        return "\n".join(lines)


def find_manifest(start: str | Path | None = None) -> Path:
    env = os.environ.get("RIESZSTOP_MANIFEST")
    if env:
        return Path(env)
    roots = [Path(start)] if start else [Path.cwd(), Path(__file__).resolve().parent]
    for root in roots:
        for cand in (root, *root.parents):
            p = cand / MANIFEST_NAME
            if p.is_file():
                return p
    raise FileNotFoundError(MANIFEST_NAME)


def load_manifest(path: str | Path | None = None) -> dict:
    path = Path(path) if path is not None else find_manifest()
    return json.loads(path.read_text())


def _resolve(target: str) -> bool:
    mod, _, name = target.partition(".")
    try:
        obj = importlib.import_module(f"{__package__}.{mod}")
    except ImportError:
        return False
    for part in name.split("."):
        if not hasattr(obj, part):
            return False
        obj = getattr(obj, part)
    return True


def check_manifest(manifest: dict | str | Path | None = None) -> ManifestReport:
    """Compare manifest anchors against the ``@anchored`` sites in the code."""
    if not isinstance(manifest, dict):
        manifest = load_manifest(manifest)
    code = registry()
    listed = {a["id"]: a["target"] for a in manifest.get("anchors", [])}

    rep = ManifestReport(ok=True)
    rep.missing_in_code = sorted(set(listed) - set(code))
    rep.missing_in_manifest = sorted(set(code) - set(listed))
    rep.wrong_target = sorted(
        (a, listed[a], code[a]) for a in set(listed) & set(code) if listed[a] != code[a]
    )
    rep.unresolvable = sorted(t for t in set(listed.values()) if not _resolve(t))
    counts: dict[str, int] = {}
    for t in listed.values():
        counts[t] = counts.get(t, 0) + 1
    rep.duplicate_targets = sorted(t for t, c in counts.items() if c > 1)
    rep.duplicate_sites = list(_DUPLICATES)
    rep.ok = not any(
        (
            rep.missing_in_code,
            rep.missing_in_manifest,
            rep.wrong_target,
            rep.unresolvable,
            rep.duplicate_targets,
            rep.duplicate_sites,
        )
    )
    return rep
