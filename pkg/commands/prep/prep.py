from pathlib import Path
from typing import List, Optional

from costate.cli import CommandBase, CONFIG_PARAMETERS
from costate.data import prepare_cohort, read_csv_cohort, save_archive, split_cohort


class Prep(CommandBase):
    parameters = {
        "data": (str, "gen 输出的 CSV 队列目录"),
        "out": (str, "输出目录"),
        **CONFIG_PARAMETERS,
    }

    async def run(self, data: str, out: str, config: Optional[str] = None, overrides: List[str] = ()):
        cfg = self.load_config(config, overrides)
        outdir = self.ensure_dir(out)
        records = prepare_cohort(read_csv_cohort(data, channels=cfg.preprocess.channels), cfg.preprocess)
        save_archive(records, outdir / "records.npz")
        plan = split_cohort(records, seed=cfg.master_seed, train_fraction=cfg.preprocess.train_fraction)
        plan.save(outdir / "split.json")
        self.logger.info("archive written", path=str(outdir), n_train=len(plan.train_ids), n_test=len(plan.test_ids))
        self.console.print(
            f"[green]prepared[/green] {len(records)} patients "
            f"({len(plan.train_ids)} train / {len(plan.test_ids)} test) -> {Path(out)}"
        )
        return plan
