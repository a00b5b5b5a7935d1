"""Command line interface: sample, fit, prune, extract, render, eval, info.

One executable drives the whole pipeline.  Every subcommand accepts a config
file via --config (JSON object or key=value lines) plus --seed, --threads and
--verbose; explicit flags override the file, the file overrides built-in
defaults, and the fully resolved configuration is printed before any work
starts.  Exit codes: 0 on success, 1 on usage errors, 2 on data or invariant
errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .extract import extract_mesh, label_vertices, save_labels
from .fit import FitConfig, fit as run_fit, write_history_csv
from .lossplot import write_loss_curve
from .mesh import (
    build_sample_set,
    load_obj,
    load_sample_set,
    normalize,
    save_obj,
    save_sample_set,
)
from .metrics import evaluate_scene
from .primitive import closedness_margin, is_empty, min_eigenvalue
from .render import MODES, Camera, render, write_image
from .scene import load_scene, prune, save_scene

USAGE_EXIT = 1
DATA_EXIT = 2


class UsageError(Exception):
    """Bad invocation: unknown flag, missing value, malformed argument."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


_REQUIRED = object()

# option name -> (type, default); _REQUIRED must arrive via a flag or the
# config file.  Global options are repeated on every subcommand so they can
# be given after the subcommand name.
_GLOBAL_FIELDS = {
    "config": (str, None),
    "seed": (int, 0),
    "threads": (int, 1),
    "verbose": (bool, False),
}

_FIELDS: dict[str, dict] = {
    "sample": {
        "mesh": (str, _REQUIRED),
        "out": (str, _REQUIRED),
        "volume": (int, 100_000),
        "surface": (int, 10_000),
    },
    "fit": {
        "samples": (str, _REQUIRED),
        "out": (str, _REQUIRED),
        "primitives": (int, 100),
        "iters": (int, 5000),
        "lr": (float, 5e-3),
        "lambda_on": (float, 2.0),
        "lambda_in": (float, 1.0),
        "lambda_out": (float, 10.0),
        "lambda_n": (float, 1.0),
        "volume_batch_fraction": (float, 0.01),
        "surface_batch_fraction": (float, 0.20),
        "alpha": (float, 1e-4),
        "init_scale": (float, 0.05),
        "prune_on_finish": (bool, True),
    },
    "prune": {
        "scene": (str, _REQUIRED),
        "out": (str, _REQUIRED),
    },
    "extract": {
        "scene": (str, _REQUIRED),
        "out": (str, _REQUIRED),
        "res": (int, 128),
        "labels": (bool, False),
    },
    "render": {
        "scene": (str, _REQUIRED),
        "out": (str, _REQUIRED),
        "mode": (str, "lambert"),
        "eye": (str, "0,0,-3"),
        "lookat": (str, "0,0,0"),
        "up": (str, "0,1,0"),
        "size": (str, "256x256"),
        "fov": (float, 40.0),
    },
    "eval": {
        "scene": (str, _REQUIRED),
        "mesh": (str, _REQUIRED),
        "tau": (float, 0.02),
        "points": (int, 100_000),
        "res": (int, 128),
        "out": (str, None),
    },
    "info": {
        "scene": (str, _REQUIRED),
    },
}


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _parse_vec3(text: str) -> np.ndarray:
    parts = str(text).split(",")
    if len(parts) != 3:
        raise UsageError(f"expected x,y,z, got {text!r}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise UsageError(f"expected numeric x,y,z, got {text!r}") from None


def _parse_size(text: str) -> tuple[int, int]:
    parts = str(text).lower().split("x")
    if len(parts) != 2:
        raise UsageError(f"expected WxH, got {text!r}")
    try:
        w, h = (int(p) for p in parts)
    except ValueError:
        raise UsageError(f"expected integer WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise UsageError(f"image size must be positive, got {text!r}")
    return w, h


def _add_fields(parser: argparse.ArgumentParser, fields: dict) -> None:
    for name, (typ, _default) in fields.items():
        flag = "--" + name.replace("_", "-")
        if typ is bool:
            # bare --labels means true; --labels false works too, as do
            # config file entries
            parser.add_argument(flag, dest=name, nargs="?", const=True,
                                type=_parse_bool, default=argparse.SUPPRESS)
        else:
            parser.add_argument(flag, dest=name, type=typ, default=argparse.SUPPRESS)


def _build_parser() -> _Parser:
    top = _Parser(prog="ias", description="unions of closed quartic implicit primitives")
    top.add_argument("--version", action="version", version=f"ias {__version__}")
    sub = top.add_subparsers(dest="command", metavar="command")
    help_lines = {
        "sample": "sample a watertight mesh into a point cache (.iass)",
        "fit": "fit primitives to a sample cache",
        "prune": "drop primitives with no interior",
        "extract": "triangulate the union surface to OBJ",
        "render": "ray trace the union surface to an image",
        "eval": "score a scene against a ground-truth mesh",
        "info": "dump per-primitive diagnostics as JSON",
    }
    for cmd, fields in _FIELDS.items():
        p = sub.add_parser(cmd, help=help_lines[cmd])
        _add_fields(p, _GLOBAL_FIELDS)
        _add_fields(p, fields)
    return top


def _read_config_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
    if doc is not None:
        if not isinstance(doc, dict):
            raise UsageError(f"{path}: config must be a JSON object or key=value lines")
        return doc
    doc = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, val = body.split("=", 1)
        doc[key.strip()] = val.strip()
    return doc


def _coerce(name: str, value, typ):
    if typ is bool:
        return _parse_bool(value)
    try:
        return typ(value)
    except (TypeError, ValueError):
        raise UsageError(f"bad value for {name!r}: {value!r}") from None


def _resolve(command: str, ns: argparse.Namespace) -> dict:
    fields = {**_GLOBAL_FIELDS, **_FIELDS[command]}
    merged = {k: d for k, (_t, d) in fields.items() if d is not _REQUIRED}
    explicit = {k: v for k, v in vars(ns).items() if k in fields}

    config_path = explicit.get("config", merged.get("config"))
    if config_path:
        try:
            doc = _read_config_file(config_path)
        except OSError as exc:
            raise UsageError(f"cannot read config {config_path}: {exc}") from None
        for key, value in doc.items():
            if key not in fields:
                raise UsageError(f"config file sets unknown key {key!r} for {command}")
            merged[key] = _coerce(key, value, fields[key][0])
        merged["config"] = config_path
    merged.update(explicit)

    missing = [k for k, (_t, d) in fields.items() if d is _REQUIRED and k not in merged]
    if missing:
        flags = ", ".join("--" + m.replace("_", "-") for m in sorted(missing))
        raise UsageError(f"{command}: missing required option(s): {flags}")

    print(f"resolved configuration ({command}):")
    for key in sorted(merged):
        print(f"  {key} = {merged[key]}")
    return merged


def _fit_artifact_base(out: str) -> str:
    for suffix in (".ias.json", ".json"):
        if out.endswith(suffix):
            return out[: -len(suffix)]
    return out


def _cmd_sample(cfg: dict) -> int:
    mesh = load_obj(cfg["mesh"])
    mesh, tf = normalize(mesh)
    ss = build_sample_set(mesh, n_volume=cfg["volume"], n_surface=cfg["surface"],
                          seed=cfg["seed"])
    save_sample_set(ss, cfg["out"])
    n_on, n_in, n_out = ss.counts
    print(f"wrote {cfg['out']}: {n_on} surface, {n_in} inside, {n_out} outside points "
          f"(normalize scale {tf.scale:.6g})")
    return 0


def _cmd_fit(cfg: dict) -> int:
    samples = load_sample_set(cfg["samples"])
    fc = FitConfig(
        primitives=cfg["primitives"],
        iters=cfg["iters"],
        lr=cfg["lr"],
        lambda_on=cfg["lambda_on"],
        lambda_in=cfg["lambda_in"],
        lambda_out=cfg["lambda_out"],
        lambda_n=cfg["lambda_n"],
        volume_batch_fraction=cfg["volume_batch_fraction"],
        surface_batch_fraction=cfg["surface_batch_fraction"],
        alpha=cfg["alpha"],
        seed=cfg["seed"],
        prune_on_finish=cfg["prune_on_finish"],
        threads=cfg["threads"],
        init_scale=cfg["init_scale"],
    )
    callback = None
    if cfg["verbose"]:
        def callback(step, total):
            print(f"  step {step:>6d}  loss {total:.6f}")
    result = run_fit(samples, fc, callback=callback)
    save_scene(result.scene, cfg["out"])
    base = _fit_artifact_base(cfg["out"])
    write_history_csv(result, base + "_loss.csv")
    write_loss_curve(result.history, base + "_loss.ppm")
    print(f"wrote {cfg['out']}: {len(result.scene)} primitives, "
          f"final loss {result.final_total:.6f}")
    print(f"loss history: {base}_loss.csv, curve: {base}_loss.ppm")
    return 0


def _cmd_prune(cfg: dict) -> int:
    scene = load_scene(cfg["scene"])
    pruned = prune(scene)
    save_scene(pruned, cfg["out"])
    removed = len(scene) - len(pruned)
    print(f"wrote {cfg['out']}: kept {len(pruned)} of {len(scene)} primitives "
          f"({removed} removed)")
    if "prune_warning" in pruned.meta:
        print(f"warning: {pruned.meta['prune_warning']}", file=sys.stderr)
    return 0


def _cmd_extract(cfg: dict) -> int:
    scene = load_scene(cfg["scene"])
    mesh = extract_mesh(scene, resolution=cfg["res"], threads=cfg["threads"])
    save_obj(mesh, cfg["out"])
    print(f"wrote {cfg['out']}: {len(mesh.vertices)} vertices, {len(mesh.faces)} faces")
    if cfg["labels"]:
        labeled = label_vertices(scene, mesh)
        save_labels(labeled, cfg["out"] + ".labels")
        print(f"wrote {cfg['out']}.labels")
    return 0


def _cmd_render(cfg: dict) -> int:
    if cfg["mode"] not in MODES:
        raise UsageError(f"unknown mode {cfg['mode']!r}; expected one of {', '.join(MODES)}")
    scene = load_scene(cfg["scene"])
    width, height = _parse_size(cfg["size"])
    camera = Camera(
        eye=_parse_vec3(cfg["eye"]),
        look_at=_parse_vec3(cfg["lookat"]),
        up=_parse_vec3(cfg["up"]),
        vertical_fov=cfg["fov"],
        width=width,
        height=height,
    )
    image = render(scene, camera, mode=cfg["mode"], threads=cfg["threads"])
    write_image(image, cfg["out"])
    hit = int(np.count_nonzero(~np.all(image == 255, axis=2)))
    print(f"wrote {cfg['out']}: {width}x{height} {cfg['mode']}, {hit} foreground pixels")
    return 0


def _cmd_eval(cfg: dict) -> int:
    scene = load_scene(cfg["scene"])
    mesh = load_obj(cfg["mesh"])
    mesh, _ = normalize(mesh)
    report = evaluate_scene(scene, mesh, n_points=cfg["points"], tau=cfg["tau"],
                            resolution=cfg["res"], seed=cfg["seed"],
                            threads=cfg["threads"])
    print(report.format_table())
    if cfg["out"]:
        with open(cfg["out"], "w", encoding="ascii") as fh:
            fh.write(report.to_json())
            fh.write("\n")
        print(f"wrote {cfg['out']}")
    else:
        print(report.to_json())
    return 0


def _cmd_info(cfg: dict) -> int:
    from . import _kernels

    scene = load_scene(cfg["scene"])
    prims = []
    for i, sp in enumerate(scene.primitives):
        a = sp.assembled
        prims.append({
            "index": i,
            "R": float(a.R),
            "center": [float(v) for v in a.center],
            "min_eigenvalue": float(min_eigenvalue(a)),
            "closedness_margin": float(closedness_margin(a)),
            "empty": bool(is_empty(a)),
            "coeffs": [float(v) for v in a.coeffs],
        })
    doc = {
        "path": cfg["scene"],
        "alpha": float(scene.alpha),
        "count": len(scene),
        "kernel_backend": _kernels.BACKEND,
        "meta": scene.meta,
        "primitives": prims,
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


_COMMANDS = {
    "sample": _cmd_sample,
    "fit": _cmd_fit,
    "prune": _cmd_prune,
    "extract": _cmd_extract,
    "render": _cmd_render,
    "eval": _cmd_eval,
    "info": _cmd_info,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError("missing subcommand; expected one of " + ", ".join(_FIELDS))
        cfg = _resolve(ns.command, ns)
    except UsageError as exc:
        print(f"ias: usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT

    try:
        return _COMMANDS[ns.command](cfg)
    except UsageError as exc:
        print(f"ias {ns.command}: usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"ias {ns.command}: error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
