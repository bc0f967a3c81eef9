import json
from typing import List, Optional

from rich.table import Table

from costate.cli import CommandBase, CONFIG_PARAMETERS
from costate.config import ExperimentConfig, config_diff
from costate.evaluation import run_experiment_async, write_outputs
from costate.utils.exceptions import TrainingError

ARMS = {"with_ca": True, "without_ca": False}
ARM_TITLES = {"with_ca": "With CA", "without_ca": "Without CA"}
ABLATED_KEY = "model.use_cross_attention"


def arm_config(cfg: ExperimentConfig, use_cross_attention: bool) -> ExperimentConfig:
    return cfg.model_copy(update={"model": cfg.model.model_copy(update={"use_cross_attention": use_cross_attention})})


def comparison_table(summaries: dict) -> Table:
    """{AP, AUC} × {With CA, Without CA}，每格为 均值 ± 标准差"""
    table = Table(title="Mean and std of AP and AUC across iterations")
    table.add_column("")
    for arm in ARMS:
        table.add_column(ARM_TITLES[arm], justify="right")
    for metric in ("ap", "auc"):
        cells = []
        for arm in ARMS:
            summary = summaries[arm][metric]
            cells.append("n/a" if summary["mean"] is None else f"{summary['mean']:.3f} ± {summary['std']:.3f}")
        table.add_row(metric.upper(), *cells)
    return table


class Ablate(CommandBase):
    parameters = {
        **CONFIG_PARAMETERS,
        "jobs": (Optional[int], "并行轮次数"),
        "data": (Optional[str], "CSV 队列目录；不给时按配置生成合成队列"),
        "out": (Optional[str], "输出目录（默认取配置中的 output_dir）"),
    }

    async def run(
        self, config: Optional[str] = None, overrides: List[str] = (),
        jobs: Optional[int] = None, data: Optional[str] = None, out: Optional[str] = None,
    ):
        base = self.load_config(config, overrides)
        outdir = self.ensure_dir(out or base.output_dir)
        configs = {arm: arm_config(base, flag) for arm, flag in ARMS.items()}
        diff = config_diff(configs["with_ca"], configs["without_ca"])
        if set(diff) != {ABLATED_KEY}:
            raise TrainingError(f"两组配置的差异必须只有 {ABLATED_KEY}，实际 {sorted(diff)}")

        records = self.load_cohort(base, data)
        jobs = self.resolve_jobs(jobs, base)
        summaries = {}
        for arm, cfg in configs.items():
            self.logger.info("ablation arm started", arm=arm, use_cross_attention=ARMS[arm])
            result = await run_experiment_async(records, cfg, jobs)
            write_outputs(result, cfg, outdir / arm)
            summaries[arm] = {key: result.report.aggregate[key].model_dump() for key in ("auc", "ap")}

        payload = {
            "arms": summaries,
            "config_diff": {key: list(values) for key, values in diff.items()},
            "configs": {arm: cfg.model_dump(mode="json") for arm, cfg in configs.items()},
        }
        (outdir / "ablation.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self.console.print(comparison_table(summaries))
        return payload
