from typing import List, Optional

from rich.table import Table

from costate.cli import CommandBase, CONFIG_PARAMETERS
from costate.evaluation import run_experiment_async, write_outputs
from costate.utils.logger import get_run_logger


def summary_cell(summary) -> str:
    if summary.mean is None:
        return "n/a"
    return f"{summary.mean:.3f} ± {summary.std:.3f}"


class Experiment(CommandBase):
    parameters = {
        **CONFIG_PARAMETERS,
        "jobs": (Optional[int], "并行轮次数（默认取 COSTATE_JOBS 或配置中的 jobs）"),
        "data": (Optional[str], "CSV 队列目录；不给时按配置生成合成队列"),
        "out": (Optional[str], "输出目录（默认取配置中的 output_dir）"),
    }

    async def run(
        self, config: Optional[str] = None, overrides: List[str] = (),
        jobs: Optional[int] = None, data: Optional[str] = None, out: Optional[str] = None,
    ):
        cfg = self.load_config(config, overrides)
        outdir = self.ensure_dir(out or cfg.output_dir)
        run_logger = get_run_logger(f"experiment_{cfg.master_seed}")
        run_logger.info("run started", outdir=str(outdir), n_iterations=cfg.eval.n_iterations)

        records = self.load_cohort(cfg, data)
        result = await run_experiment_async(records, cfg, self.resolve_jobs(jobs, cfg))
        written = write_outputs(result, cfg, outdir)
        run_logger.info("run finished", files=[p.name for p in written])

        aggregate = result.report.aggregate
        table = Table(title=f"{cfg.eval.n_iterations} iterations, master seed {cfg.master_seed}")
        table.add_column("metric")
        table.add_column("mean ± std", justify="right")
        table.add_column("n", justify="right")
        for key in ("auc", "ap"):
            table.add_row(key.upper(), summary_cell(aggregate[key]), str(aggregate[key].n))
        self.console.print(table)
        return result
