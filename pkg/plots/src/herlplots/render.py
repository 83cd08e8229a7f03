"""Renderers for run artifacts.

Pure transformations: everything comes from the CSV and the grid config
file, and output bytes are deterministic for fixed inputs (SVG with a fixed
hash salt and no date metadata).
"""

import configparser
import csv

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "herl-plots"

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


class RenderError(ValueError):
    pass


def load_grid(path):
    """Grid geometry from the run's INI config: (width, height, goal, traps).

    Cells are (row, col), 1-based; states number left-right, top-to-bottom.
    """
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise RenderError(f"cannot read grid config {path}")
    if "grid" not in cp:
        raise RenderError("grid config has no [grid] section")
    g = cp["grid"]

    def cell(text):
        r, c = (int(x) for x in text.split(","))
        return r, c

    width = g.getint("width", 6)
    height = g.getint("height", 6)
    goal = cell(g.get("goal", "6,6"))
    traps = tuple(cell(t) for t in g.get("traps", "").split(";") if t.strip())
    return width, height, goal, traps


def read_value_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "state" not in rows[0] or "value" not in rows[0]:
        raise RenderError(f"{path} is not a value-map CSV (state,value)")
    states = np.array([int(r["state"]) for r in rows])
    values = np.array([float(r["value"]) for r in rows])
    order = np.argsort(states)
    return states[order], values[order]


def read_trace_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or \
                "max_norm_error" not in reader.fieldnames:
            raise RenderError(f"{path} is not an error-trace CSV")
        value_col = next((c for c in reader.fieldnames
                          if c.startswith("value_s")), None)
        error_col = next((c for c in reader.fieldnames
                          if c.startswith("error_s")), None)
        rows = list(reader)
    if not rows:
        raise RenderError(f"{path} has no trace rows")
    iters = np.array([int(r["iteration"]) for r in rows])
    max_err = np.array([float(r["max_norm_error"]) for r in rows])
    values = (np.array([float(r[value_col]) for r in rows])
              if value_col else None)
    errors = (np.array([float(r[error_col]) for r in rows])
              if error_col else None)
    label = value_col.removeprefix("value_") if value_col else None
    return iters, max_err, values, errors, label


def _save(fig, out):
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_value_map(csv_path, grid_path, out_path):
    """6x6 heat map with G/T markers and 1-based state numbering."""
    width, height, goal, traps = load_grid(grid_path)
    states, values = read_value_csv(csv_path)
    n = width * height
    if len(states) != n or states[0] != 1 or states[-1] != n:
        raise RenderError(
            f"value CSV has {len(states)} states, grid expects {n}")
    grid_vals = values.reshape(height, width)
    fig, ax = plt.subplots(figsize=(6, 5.2))
    im = ax.imshow(grid_vals, cmap="viridis")
    fig.colorbar(im, ax=ax, shrink=0.85, label="value")
    specials = {goal: "G"}
    specials.update({t: "T" for t in traps})
    for s in range(n):
        row, col = divmod(s, width)
        mark = specials.get((row + 1, col + 1))
        label = f"{s + 1}" + (f"\n{mark}" if mark else "")
        color = "white" if mark else "0.85"
        weight = "bold" if mark else "normal"
        ax.text(col, row, label, ha="center", va="center", fontsize=8,
                color=color, fontweight=weight)
    ax.set_xticks([])
    ax.set_yticks([])
    ax.set_title("state values (G goal, T trap)")
    _save(fig, out_path)
    return out_path


def render_error_trace(csv_path, out_path):
    """Max-norm error vs iteration, with per-state insets when present."""
    iters, max_err, values, errors, label = read_trace_csv(csv_path)
    if values is not None and errors is not None:
        fig, axd = plt.subplot_mosaic([["top", "top"], ["bl", "br"]],
                                      figsize=(9, 6.5))
        top, bottom_left, bottom_right = axd["top"], axd["bl"], axd["br"]
        top.plot(iters, max_err, lw=0.7)
        top.set_xlabel("iteration")
        top.set_ylabel("max-norm error")
        top.set_title("maximum norm of table error per iterate")
        bottom_left.plot(iters, values, lw=0.7, color="tab:green")
        bottom_left.set_xlabel("iteration")
        bottom_left.set_ylabel(f"value ({label})")
        bottom_right.plot(iters, errors, lw=0.7, color="tab:red")
        bottom_right.set_xlabel("iteration")
        bottom_right.set_ylabel(f"error ({label})")
        fig.tight_layout()
    else:
        fig, ax = plt.subplots(figsize=(8, 4))
        ax.plot(iters, max_err, lw=0.7)
        ax.set_xlabel("iteration")
        ax.set_ylabel("max-norm error")
        ax.set_title("maximum norm of table error per iterate")
    _save(fig, out_path)
    return out_path
