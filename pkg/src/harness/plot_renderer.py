import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from jinja2 import BaseLoader, Environment, StrictUndefined

logger = logging.getLogger(__name__)

LINE_PLOT_TEMPLATE = """\
<svg xmlns="http://www.w3.org/2000/svg" width="{{ width }}" height="{{ height }}" viewBox="0 0 {{ width }} {{ height }}">
  <rect width="100%" height="100%" fill="white"/>
  <text x="{{ width / 2 }}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{{ title }}</text>
  <line x1="{{ left }}" y1="{{ bottom }}" x2="{{ right }}" y2="{{ bottom }}" stroke="black"/>
  <line x1="{{ left }}" y1="{{ top }}" x2="{{ left }}" y2="{{ bottom }}" stroke="black"/>
{% for tick in x_ticks %}
  <text x="{{ tick.pos }}" y="{{ bottom + 16 }}" text-anchor="middle" font-family="sans-serif" font-size="10">{{ tick.label }}</text>
{% endfor %}
{% for tick in y_ticks %}
  <text x="{{ left - 6 }}" y="{{ tick.pos + 3 }}" text-anchor="end" font-family="sans-serif" font-size="10">{{ tick.label }}</text>
{% endfor %}
  <text x="{{ (left + right) / 2 }}" y="{{ height - 6 }}" text-anchor="middle" font-family="sans-serif" font-size="11">{{ x_label }}</text>
  <text x="14" y="{{ (top + bottom) / 2 }}" text-anchor="middle" font-family="sans-serif" font-size="11" transform="rotate(-90 14 {{ (top + bottom) / 2 }})">{{ y_label }}</text>
{% for series in lines %}
  <polyline fill="none" stroke="{{ series.color }}" stroke-width="1.5" points="{{ series.points }}"/>
  <text x="{{ right + 8 }}" y="{{ top + 14 * loop.index }}" font-family="sans-serif" font-size="10" fill="{{ series.color }}">{{ series.label }}</text>
{% endfor %}
</svg>
"""

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]

Series = Tuple[str, Sequence[float], Sequence[float]]


class SvgPlotRenderer:
    def __init__(self, width: int = 720, height: int = 420):
        self.width = width
        self.height = height
        self.margins = (70, 120, 36, 44)
        self.env = Environment(
            loader=BaseLoader(),
            undefined=StrictUndefined,
            trim_blocks=True,
            lstrip_blocks=True,
            autoescape=True,
        )
        self.template = self.env.from_string(LINE_PLOT_TEMPLATE)

    def render_line_plot(
        self,
        title: str,
        series: List[Series],
        x_label: str = "t",
        y_label: str = "",
        log_y: bool = False,
    ) -> str:
        """Render line series as a standalone SVG document.

        Raises:
            ValueError: If the series are empty or the template fails to render
        """
        try:
            return self._render(title, series, x_label, y_label, log_y)
        except Exception as e:
            logger.error(f"Plot rendering failed: {str(e)}")
            raise ValueError(f"Plot rendering error: {str(e)}")

    def _render(self, title, series, x_label, y_label, log_y) -> str:
        if not series:
            raise ValueError("nothing to plot")
        left, right_margin, top, bottom_margin = self.margins
        right = self.width - right_margin
        bottom = self.height - bottom_margin

        prepared = []
        for label, xs, ys in series:
            xs = np.asarray(xs, dtype=float)
            ys = np.asarray(ys, dtype=float)
            keep = np.isfinite(xs) & np.isfinite(ys)
            if log_y:
                keep &= ys > 0
            if keep.any():
                prepared.append((label, xs[keep], np.log10(ys[keep]) if log_y else ys[keep]))
        if not prepared:
            raise ValueError("no finite points to plot")

        x_lo = min(float(xs.min()) for _, xs, _ in prepared)
        x_hi = max(float(xs.max()) for _, xs, _ in prepared)
        y_lo = min(float(ys.min()) for _, _, ys in prepared)
        y_hi = max(float(ys.max()) for _, _, ys in prepared)
        if x_hi == x_lo:
            x_hi = x_lo + 1.0
        if y_hi == y_lo:
            y_hi, y_lo = y_hi + 0.5, y_lo - 0.5

        def sx(x):
            return left + (x - x_lo) / (x_hi - x_lo) * (right - left)

        def sy(y):
            return bottom - (y - y_lo) / (y_hi - y_lo) * (bottom - top)

        lines = []
        for i, (label, xs, ys) in enumerate(prepared):
            points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
            lines.append({"label": label, "points": points, "color": PALETTE[i % len(PALETTE)]})

        x_ticks = [{"pos": f"{sx(x):.2f}", "label": f"{x:.3g}"} for x in np.linspace(x_lo, x_hi, 6)]
        y_ticks = []
        for y in np.linspace(y_lo, y_hi, 6):
            text = f"1e{y:.1f}" if log_y else f"{y:.3g}"
            y_ticks.append({"pos": sy(y), "label": text})

        return self.template.render(
            width=self.width,
            height=self.height,
            title=title,
            left=left,
            right=right,
            top=top,
            bottom=bottom,
            x_label=x_label,
            y_label=y_label + (" (log10)" if log_y and y_label else ""),
            x_ticks=x_ticks,
            y_ticks=y_ticks,
            lines=lines,
        )


def finite_or_none(value: Optional[float]) -> float:
    return math.nan if value is None else value


# Global instance
plot_renderer = SvgPlotRenderer()
