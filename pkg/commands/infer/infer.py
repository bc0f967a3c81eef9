from typing import List, Optional

from costate.cli import CommandBase, CONFIG_PARAMETERS
from costate.data import SplitPlan, load_archive, select_records
from costate.evaluation import patient_metrics
from costate.model import ReferenceSet, confusion_counts, infer_cohort, restore, write_predictions
from costate.utils.exceptions import UndefinedMetricError


class Infer(CommandBase):
    parameters = {
        "checkpoint": (str, "train 输出的 checkpoint.json"),
        "archive": (str, "prep 输出的 records.npz"),
        "split": (str, "prep 输出的 split.json"),
        "out": (str, "预测 CSV 路径"),
        **CONFIG_PARAMETERS,
    }

    async def run(
        self, checkpoint: str, archive: str, split: str, out: str,
        config: Optional[str] = None, overrides: List[str] = (),
    ):
        cfg = self.load_config(config, overrides)
        params = restore(checkpoint)
        records = load_archive(archive)
        plan = SplitPlan.load(split)
        refs = ReferenceSet(select_records(records, plan.train_ids)).limit(cfg.inference.max_references)
        test_records = select_records(records, plan.test_ids)

        scores = infer_cohort(refs, test_records, params)
        path = write_predictions(out, test_records, scores)
        for r in test_records:
            counts = confusion_counts(scores[r.patient_id], r.y, cfg.inference.threshold)
            try:
                metrics = patient_metrics(scores[r.patient_id], r.y)
            except UndefinedMetricError:
                metrics = {}
            self.logger.info("patient scored", patient_id=r.patient_id, **counts, **metrics)
        self.console.print(
            f"[green]predictions[/green] for {len(test_records)} patients "
            f"({len(refs)} references) -> {path}"
        )
        return path
