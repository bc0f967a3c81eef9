from typing import List, Optional

from costate.cli import CommandBase, CONFIG_PARAMETERS
from costate.data import generate_cohort, write_csv_cohort


class Gen(CommandBase):
    parameters = {
        "out": (str, "输出目录"),
        **CONFIG_PARAMETERS,
        "seed": (Optional[int], "覆盖 data.seed"),
    }

    async def run(self, out: str, config: Optional[str] = None, overrides: List[str] = (), seed: Optional[int] = None):
        cfg = self.load_config(config, overrides)
        spec = cfg.data if seed is None else cfg.data.model_copy(update={"seed": seed})
        cohort = generate_cohort(spec)
        written = write_csv_cohort(cohort, out, channels=cfg.preprocess.channels)
        self.console.print(f"[green]wrote[/green] {len(written)} patient CSVs to {out} (seed {spec.seed})")
        return written
