"""Loss/accuracy curves as a standalone SVG document (no timestamps, stable bytes)."""

from xml.sax.saxutils import escape

PANEL_W, PANEL_H = 420, 300
MARGIN = {"left": 60, "right": 20, "top": 36, "bottom": 48}
COLORS = {"train": "#1f77b4", "valid": "#ff7f0e"}


def _fmt(v):
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _panel(x0, title, ylabel, epochs, series, lr_changes):
    """One chart; ``series`` maps a legend label to y values aligned with ``epochs``."""
    w = PANEL_W - MARGIN["left"] - MARGIN["right"]
    h = PANEL_H - MARGIN["top"] - MARGIN["bottom"]
    left, top = x0 + MARGIN["left"], MARGIN["top"]
    ys = [y for vals in series.values() for y in vals]
    lo, hi = min(ys), max(ys)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    e_lo, e_hi = epochs[0], epochs[-1]
    span = (e_hi - e_lo) or 1

    def px(e):
        return left + (e - e_lo) / span * w

    def py(y):
        return top + (hi - y) / (hi - lo) * h

    out = [f'<g class="panel" id="{escape(title.lower())}">',
           f'<text x="{x0 + PANEL_W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="none" stroke="#333"/>']
    for i in range(5):
        yv = lo + (hi - lo) * i / 4
        out.append(f'<text x="{left - 6}" y="{py(yv) + 4:.1f}" text-anchor="end" font-size="10">{_fmt(yv)}</text>')
    for e in sorted({e_lo, e_hi, *(e_lo + round(span * k / 4) for k in range(1, 4))}):
        out.append(f'<text x="{px(e):.1f}" y="{top + h + 14}" text-anchor="middle" font-size="10">{e}</text>')
    for e in lr_changes:
        out.append(f'<line class="lr-change" x1="{px(e):.1f}" y1="{top}" x2="{px(e):.1f}" y2="{top + h}" '
                   'stroke="red" stroke-dasharray="4,3"/>')
    out.append('<g class="curves">')
    for k, (label, vals) in enumerate(series.items()):
        pts = " ".join(f"{px(e):.2f},{py(y):.2f}" for e, y in zip(epochs, vals))
        color = COLORS["train" if label.startswith("train") else "valid"]
        out.append(f'<polyline class="curve" data-series="{escape(label)}" points="{pts}" '
                   f'fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 12 + 14 * k
        out.append(f'<line x1="{left + w - 90}" y1="{ly}" x2="{left + w - 74}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + w - 70}" y="{ly + 4}" font-size="10">{escape(label)}</text>')
    out.append("</g>")
    out.append(f'<text class="axis-label" x="{left + w / 2:.1f}" y="{PANEL_H - 10}" text-anchor="middle" font-size="12">epoch</text>')
    out.append(f'<text class="axis-label" x="{x0 + 14}" y="{top + h / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 {x0 + 14} {top + h / 2:.1f})">{escape(ylabel)}</text>')
    out.append("</g>")
    return out


def history_svg(history):
    """Two panels, loss and accuracy, train vs validation, lr changes as red dashed lines."""
    if len(history) == 0:
        raise ValueError("history is empty")
    epochs = history.column("epoch")
    lrs = history.column("lr")
    changes = [e for e, prev, cur in zip(epochs[1:], lrs, lrs[1:]) if cur != prev]
    body = _panel(0, "Loss", "cross-entropy loss", epochs,
                  {"train loss": history.column("train_loss"), "valid loss": history.column("val_loss")},
                  changes)
    body += _panel(PANEL_W, "Accuracy", "accuracy", epochs,
                   {"train acc": history.column("train_acc"), "valid acc": history.column("val_acc")},
                   changes)
    width = 2 * PANEL_W
    return "\n".join([
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_H}" viewBox="0 0 {width} {PANEL_H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        *body,
        "</svg>",
        "",
    ])
