"""CSV, JSON and SVG outputs of an experiment run.

Files carry no wall-clock content, so identical configurations write
byte-identical files.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from src.core.exports import write_table, write_text, write_trajectory_csv
from src.core.quadrature import resample
from src.core.trajectories import ControlSignal, RiccatiPath, StatePath
from src.harness.plot_renderer import SvgPlotRenderer, finite_or_none, plot_renderer
from src.schemas import ExperimentReport, TraceRow

logger = logging.getLogger(__name__)

CURVE_POINTS = 201


def horizon_tag(horizon: float) -> str:
    return f"T{horizon:g}".replace(".", "p")


class ArtifactWriter:
    def __init__(self, output_dir: Path, experiment_id: str, renderer: Optional[SvgPlotRenderer] = None):
        self.root = Path(output_dir) / experiment_id
        self.experiment_id = experiment_id
        self.renderer = renderer or plot_renderer
        self.written: List[Path] = []

    def _track(self, path: Path) -> Path:
        self.written.append(path)
        return path

    def write_report(self, report: BaseModel) -> Path:
        text = report.model_dump_json(by_alias=True, indent=2)
        return self._track(write_text(self.root / "report.json", text + "\n"))

    def write_trajectory(self, horizon: float, state: StatePath, control, state_names=None) -> Path:
        path = self.root / f"trajectory_{horizon_tag(horizon)}.csv"
        return self._track(write_trajectory_csv(path, state, control, state_names))

    def write_trace(self, horizon: float, trace: Sequence[TraceRow]) -> Path:
        path = self.root / f"trace_{horizon_tag(horizon)}.csv"
        columns = [
            [row.iter for row in trace],
            [row.cost for row in trace],
            [row.grad_norm for row in trace],
            [row.step for row in trace],
        ]
        return self._track(write_table(path, ["iter", "cost", "grad_norm", "step"], columns))

    def write_convergence(self, report: ExperimentReport) -> Path:
        reference = report.ith_reference_cost
        costs, cost_errors, state_errors, control_errors = [], [], [], []
        for cost, errors in zip(report.costs, report.window_errors):
            total = None if cost is None else cost.total
            costs.append(finite_or_none(total))
            cost_errors.append(
                finite_or_none(None if total is None or reference is None else abs(total - reference))
            )
            state_errors.append(finite_or_none(None if errors is None else errors.state_error))
            control_errors.append(finite_or_none(None if errors is None else errors.control_error))
        header = [
            "horizon",
            "cost",
            "cost_error",
            "state_window_error",
            "control_window_error",
            "terminal_norm",
        ]
        columns = [
            report.horizons,
            costs,
            cost_errors,
            state_errors,
            control_errors,
            [finite_or_none(v) for v in report.terminal_norms],
        ]
        path = self._track(write_table(self.root / "convergence.csv", header, columns))

        series = [("state", report.horizons, state_errors), ("control", report.horizons, control_errors)]
        if reference is not None:
            series.append(("|J_T − ref|", report.horizons, cost_errors))
        self.write_svg(
            "convergence.svg",
            f"{self.experiment_id}: errors against the reference",
            series,
            x_label="T",
            y_label="error",
            log_y=True,
        )
        return path

    def write_error_curves(
        self,
        window: Tuple[float, float],
        states: Dict[float, StatePath],
        reference: StatePath,
        weight_matrix=None,
        name: str = "state",
    ) -> Path:
        """Pointwise window errors ‖a(t) − b(t)‖ per horizon on a uniform time grid."""
        times = np.linspace(window[0], window[1], CURVE_POINTS)
        ref = resample(reference, times)
        header, columns, series = ["t"], [times], []
        for horizon, path in sorted(states.items()):
            diff = resample(path, times) - ref
            if weight_matrix is None:
                sq = np.sum(diff * diff, axis=1)
            else:
                sq = np.einsum("ki,ki->k", diff, np.asarray(weight_matrix @ diff.T).T)
            pointwise = np.sqrt(np.maximum(sq, 0.0))
            header.append(horizon_tag(horizon))
            columns.append(pointwise)
            series.append((horizon_tag(horizon), times, pointwise))
        path = self._track(write_table(self.root / f"{name}_error_curves.csv", header, columns))
        self.write_svg(
            f"{name}_error_curves.svg",
            f"{self.experiment_id}: {name} error on the window",
            series,
            y_label="error",
            log_y=True,
        )
        return path

    def write_riccati(self, path: RiccatiPath, name: str = "riccati_periodic") -> Path:
        m = path.matrices
        columns = [path.grid.nodes, m[:, 0, 0], m[:, 0, 1], m[:, 1, 1]]
        out = self._track(write_table(self.root / f"{name}.csv", ["t", "pi11", "pi12", "pi22"], columns))
        self.write_svg(
            f"{name}.svg",
            "Riccati entries",
            [(label, path.grid.nodes, col) for label, col in zip(("pi11", "pi12", "pi22"), columns[1:])],
        )
        return out

    def write_snapshots(self, nodes: np.ndarray, times: Sequence[float], columns: np.ndarray, name: str = "snapshots") -> Path:
        header = ["x"] + [f"t={t:g}" for t in times]
        data = [nodes] + [columns[:, i] for i in range(columns.shape[1])]
        out = self._track(write_table(self.root / f"{name}.csv", header, data))
        self.write_svg(
            f"{name}.svg",
            f"{self.experiment_id}: state snapshots",
            [(f"t={t:g}", nodes, columns[:, i]) for i, t in enumerate(times)],
            x_label="x",
            y_label="y",
        )
        return out

    def write_controls(self, horizon: float, control) -> Path:
        header = ["t"] + [f"u{j + 1}" for j in range(control.channels)]
        data = [control.grid.nodes] + [control.values[:, j] for j in range(control.channels)]
        out = self._track(write_table(self.root / f"controls_{horizon_tag(horizon)}.csv", header, data))
        self.write_svg(
            f"controls_{horizon_tag(horizon)}.svg",
            f"{self.experiment_id}: controls, T={horizon:g}",
            [(header[j + 1], control.grid.nodes, control.values[:, j]) for j in range(control.channels)],
            y_label="u",
        )
        return out

    def write_trajectory_plots(
        self,
        states: Dict[float, StatePath],
        controls: Dict[float, ControlSignal],
        reference: Optional[Tuple[StatePath, ControlSignal]] = None,
    ) -> List[Path]:
        """One SVG per state component and control channel, every horizon overlaid on the reference."""
        written = []
        for prefix, paths, ref in (
            ("y", states, None if reference is None else reference[0]),
            ("u", controls, None if reference is None else reference[1]),
        ):
            if not paths:
                continue
            width = next(iter(paths.values())).values.shape[1]
            for i in range(width):
                name = prefix if width == 1 else f"{prefix}{i + 1}"
                series = [
                    (horizon_tag(h), p.grid.nodes, p.values[:, i]) for h, p in sorted(paths.items())
                ]
                if ref is not None:
                    series.append(("ITH", ref.grid.nodes, ref.values[:, i]))
                out = self.write_svg(
                    f"trajectories_{name}.svg",
                    f"{self.experiment_id}: {name}(t) per horizon",
                    series,
                    y_label=name,
                )
                if out is not None:
                    written.append(out)
        return written

    def write_svg(self, filename: str, title: str, series, **kwargs) -> Optional[Path]:
        try:
            svg = self.renderer.render_line_plot(title, series, **kwargs)
        except ValueError as e:
            logger.warning(f"Skipping {filename}: {e}")
            return None
        return self._track(write_text(self.root / filename, svg))


def create_artifact_writer(output_dir: Path, experiment_id: str) -> ArtifactWriter:
    writer = ArtifactWriter(output_dir, experiment_id)
    writer.root.mkdir(parents=True, exist_ok=True)
    logger.info(f"Writing artifacts to {writer.root}")
    return writer
