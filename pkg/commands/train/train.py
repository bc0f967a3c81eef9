from typing import List, Optional

from costate.cli import CommandBase, CONFIG_PARAMETERS
from costate.data import SplitPlan, load_archive, select_records
from costate.model import CollaborativeTrainer, checkpoint


class Train(CommandBase):
    parameters = {
        "archive": (str, "prep 输出的 records.npz"),
        "split": (str, "prep 输出的 split.json"),
        "out": (str, "输出目录"),
        **CONFIG_PARAMETERS,
    }

    async def run(self, archive: str, split: str, out: str, config: Optional[str] = None, overrides: List[str] = ()):
        cfg = self.load_config(config, overrides)
        outdir = self.ensure_dir(out)
        train_records = select_records(load_archive(archive), SplitPlan.load(split).train_ids)

        trainer = CollaborativeTrainer(cfg.train, cfg.model, log_path=outdir / "train_log.jsonl")
        params, trace = trainer.train(train_records)
        digest = checkpoint(params, outdir / "checkpoint.json")
        self.console.print(
            f"[green]trained[/green] on {len(train_records)} patients, "
            f"final loss {trace.epoch_losses[-1]:.6f}, checkpoint sha256 {digest}"
        )
        return digest
