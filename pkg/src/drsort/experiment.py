"""Experiment orchestration: train the policy matrix, evaluate, report.

Outputs under the configured directory:
  metrics.csv            one aggregated row per policy (Table-1 shape);
                         byte-identical across re-runs with the same config
  trace_<run>-s<seed>.csv  per-episode training traces
  cb_<seed>.csv          predictor training-loss curves
  checkpoints/*.json     policy and predictor parameters
  report.json            full per-run, per-group detail plus errors
"""

from __future__ import annotations

import dataclasses
import json
import time
import traceback
from pathlib import Path

from . import bandit, training, valuenet
from .config import ExperimentConfig, RunSpec, config_to_doc
from .seeding import stream

TRACE_COLUMNS = ("episode", "mode", "mean_return", "recirc_rate", "epsilon", "wall_clock_s", "cpu_s")
METRIC_COLUMNS = (
    "policy",
    "recirc_rate_mean",
    "recirc_rate_std",
    "throughput_mean",
    "recirc_amount_mean",
)


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, columns, rows) -> None:
    lines = [",".join(columns)]
    lines.extend(",".join(_csv_cell(cell) for cell in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_trace_csv(path: Path, trace: list[training.TraceRow]) -> None:
    rows = [
        (r.episode, r.mode, r.mean_return, r.recirc_rate, r.epsilon, r.wall_clock_s, r.cpu_s)
        for r in trace
    ]
    write_csv(path, TRACE_COLUMNS, rows)


def read_trace_csv(path: Path) -> list[dict]:
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    header = lines[0].split(",")
    out = []
    for line in lines[1:]:
        cells = line.split(",")
        record = dict(zip(header, cells))
        for key in ("mean_return", "recirc_rate", "epsilon", "wall_clock_s", "cpu_s"):
            record[key] = float(record[key])
        record["episode"] = int(record["episode"])
        out.append(record)
    return out


def evaluation_to_doc(report: training.EvaluationReport) -> dict:
    return {
        "wall_clock_s": report.wall_clock_s,
        "per_group": [
            {
                "group": g.group,
                "recirc_rate_mean": g.mean("recirc_rate"),
                "recirc_rate_std": g.std("recirc_rate"),
                "throughput_mean": g.mean("throughput"),
                "recirc_amount_mean": g.mean("recirc_amount"),
                "episode_recirc_rates": [ep.recirc_rate for ep in g.episodes],
                "episode_throughputs": [ep.throughput for ep in g.episodes],
            }
            for g in report.per_group
        ],
    }


class ExperimentRunner:
    """Runs a config's policy matrix; failures are recorded per run."""

    def __init__(self, config: ExperimentConfig, output_dir: Path | None = None):
        self.config = config
        self.out = Path(output_dir) if output_dir is not None else Path(config.output_dir)
        self.checkpoint_dir = self.out / "checkpoints"
        self._cb_cache: dict[int, valuenet.MlpParams] = {}
        self._marl_anchor: dict[int, valuenet.MlpParams] = {}
        self.run_docs: list[dict] = []
        self.errors: list[dict] = []

    def _ensure_cb(self, seed: int) -> valuenet.MlpParams:
        if seed in self._cb_cache:
            return self._cb_cache[seed]
        cfg = self.config
        policy_rng = stream(seed, "cb/explore-policy")
        explore = bandit.make_exploration_policy(
            cfg.cb.explore, cfg.env, policy_rng, q_params=self._marl_anchor.get(seed)
        )
        result = bandit.train_cb(cfg.env, cfg.group_set, explore, cfg.cb, seed)
        self._cb_cache[seed] = result.params
        path = self.checkpoint_dir / f"cb-s{seed}.json"
        valuenet.save_checkpoint(
            path,
            result.params,
            kind="cb",
            config_digest=valuenet.config_hash(dataclasses.asdict(cfg.cb)),
            meta={"seed": seed, "wall_clock_s": result.wall_clock_s},
        )
        write_csv(
            self.out / f"cb_s{seed}.csv",
            ("episode", "loss"),
            list(enumerate(result.episode_losses, start=1)),
        )
        return result.params

    def _train_one(self, run: RunSpec, seed: int) -> dict:
        cfg = self.config
        train_cfg = dataclasses.replace(
            cfg.train,
            worst_case_mode=run.mode,
            fixed_group=(run.group - 1) if run.group is not None else None,
            episodes=run.episodes,
        )
        cb_params = self._ensure_cb(seed) if run.mode == "cb" else None
        t0 = time.perf_counter()
        result = training.train_drmarl(train_cfg, cfg.env, cfg.group_set, seed, cb_params)
        train_seconds = time.perf_counter() - t0
        if run.mode == "fixed" and seed not in self._marl_anchor:
            self._marl_anchor[seed] = result.params

        evaluation = training.evaluate_policy(
            result.params, cfg.env, cfg.group_set, cfg.eval_trials, cfg.eval_seed
        )
        tag = f"{run.name}-s{seed}"
        trace_path = self.out / f"trace_{tag}.csv"
        write_trace_csv(trace_path, result.trace)
        checkpoint_path = self.checkpoint_dir / f"{tag}.json"
        valuenet.save_checkpoint(
            checkpoint_path,
            result.params,
            kind="vdn",
            config_digest=valuenet.config_hash(dataclasses.asdict(train_cfg)),
            meta={"run": run.name, "seed": seed, "mode": run.mode, "group": run.group},
        )
        return {
            "name": run.name,
            "seed": seed,
            "mode": run.mode,
            "group": run.group,
            "episodes": run.episodes,
            "train_wall_clock_s": train_seconds,
            "cb_digest_before": result.cb_digest_before,
            "cb_digest_after": result.cb_digest_after,
            "trace": trace_path.name,
            "checkpoint": str(checkpoint_path.relative_to(self.out)),
            "evaluation": evaluation_to_doc(evaluation),
        }

    def run(self) -> dict:
        self.out.mkdir(parents=True, exist_ok=True)
        self.checkpoint_dir.mkdir(parents=True, exist_ok=True)
        for run in self.config.runs:
            for seed in run.seeds:
                try:
                    self.run_docs.append(self._train_one(run, seed))
                except Exception as exc:  # noqa: BLE001 - isolate per-run failures
                    self.errors.append(
                        {
                            "name": run.name,
                            "seed": seed,
                            "error": f"{type(exc).__name__}: {exc}",
                            "traceback": traceback.format_exc(),
                        }
                    )
        report = {
            "config": config_to_doc(self.config),
            "runs": self.run_docs,
            "errors": self.errors,
        }
        (self.out / "report.json").write_text(
            json.dumps(report, indent=2), encoding="utf-8"
        )
        write_metrics_csv(self.out / "metrics.csv", self.config, self.run_docs)
        return report


def metrics_rows(config: ExperimentConfig, run_docs: list[dict]) -> list[tuple]:
    """One Table-1-shaped row per policy, pooled over seeds and groups."""
    rows = []
    for run in config.runs:
        docs = [d for d in run_docs if d["name"] == run.name]
        if not docs:
            continue
        rates, throughputs, amounts = [], [], []
        for doc in docs:
            for group in doc["evaluation"]["per_group"]:
                rates.append(group["recirc_rate_mean"])
                throughputs.append(group["throughput_mean"])
                amounts.append(group["recirc_amount_mean"])
        n = len(rates)
        mean_rate = sum(rates) / n
        var = sum((r - mean_rate) ** 2 for r in rates) / n
        rows.append(
            (
                run.name,
                mean_rate,
                var**0.5,
                sum(throughputs) / n,
                sum(amounts) / n,
            )
        )
    return rows


def write_metrics_csv(path: Path, config: ExperimentConfig, run_docs: list[dict]) -> None:
    write_csv(path, METRIC_COLUMNS, metrics_rows(config, run_docs))


def run_experiment(config: ExperimentConfig, output_dir: Path | None = None) -> dict:
    """Train all configured policies, evaluate on every group, write reports."""
    return ExperimentRunner(config, output_dir).run()


# ---------------------------------------------------------------------------
# Report regeneration (the `report` subcommand)
# ---------------------------------------------------------------------------


def regenerate_reports(runs_dir: Path, out_dir: Path) -> None:
    """Rebuild metrics.csv and a convergence CSV from a finished matrix.

    The convergence file carries cumulative wall-clock per episode so
    training-efficiency curves can be plotted directly.
    """
    runs_dir = Path(runs_dir)
    report_path = runs_dir / "report.json"
    if not report_path.exists():
        raise FileNotFoundError(f"no report.json under {runs_dir}")
    report = json.loads(report_path.read_text(encoding="utf-8"))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    from .config import parse_config  # late import to avoid cycle at module load

    config = parse_config(json.dumps(report["config"]))
    write_metrics_csv(out_dir / "metrics.csv", config, report["runs"])

    convergence_rows = []
    for doc in report["runs"]:
        trace_path = runs_dir / doc["trace"]
        if not trace_path.exists():
            continue
        cumulative = 0.0
        for record in read_trace_csv(trace_path):
            cumulative += record["wall_clock_s"]
            convergence_rows.append(
                (
                    doc["name"],
                    doc["seed"],
                    record["episode"],
                    record["mean_return"],
                    record["recirc_rate"],
                    cumulative,
                )
            )
    write_csv(
        out_dir / "convergence.csv",
        ("policy", "seed", "episode", "mean_return", "recirc_rate", "cum_wall_clock_s"),
        convergence_rows,
    )
