"""
重复实验: 每轮重新划分训练/测试集、训练、对每个测试病人做协同推理并计算 AUC / AP，
最后对各轮均值求总体均值与总体标准差；另外导出病人出现矩阵供相关性分析。
"""

import asyncio
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator

from ..config import ExperimentConfig, validate_config
from ..data.preprocess import select_records, split_cohort
from ..data.records import PatientRecord
from ..model.encoder import embed_records
from ..model.inference import ReferenceSet, confusion_counts, infer_cohort
from ..model.trainer import CollaborativeTrainer
from ..utils.exceptions import DataError, UndefinedMetricError
from ..utils.logger import get_logger
from .metrics import auc, average_precision
from .plots import render_plots
from .tsne import stratified_subsample, tsne_project

logger = get_logger("experiment")

REPORT_FORMAT = "costate-metrics-report"
REPORT_VERSION = 1
AGGREGATE_TOL = 1e-9
MIN_COHORT = 5


class PatientScore(BaseModel):
    model_config = ConfigDict(extra="forbid")

    patient_id: str
    n_samples: int
    ih_fraction: float
    auc: Optional[float] = None
    ap: Optional[float] = None
    excluded_reason: Optional[str] = None


class IterationResult(BaseModel):
    model_config = ConfigDict(extra="forbid")

    iteration: int
    split_seed: int
    train_seed: int
    train_ids: List[str]
    test_ids: List[str]
    patients: List[PatientScore]
    n_excluded: int
    skipped: bool
    mean_auc: Optional[float] = None
    mean_ap: Optional[float] = None
    pooled_auc: Optional[float] = None
    pooled_ap: Optional[float] = None
    confusion: Dict[str, int]
    final_train_loss: float


class MetricSummary(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mean: Optional[float] = None
    std: Optional[float] = None
    n: int = 0


def summarize(values: Sequence[Optional[float]]) -> MetricSummary:
    """总体（非样本）均值与标准差，忽略未定义值"""
    defined = [v for v in values if v is not None]
    if not defined:
        return MetricSummary()
    arr = np.asarray(defined, dtype=np.float64)
    return MetricSummary(mean=float(arr.mean()), std=float(arr.std(ddof=0)), n=len(defined))


class MetricsReport(BaseModel):
    """各轮结果 + 聚合；载入时重新计算聚合并核对"""

    model_config = ConfigDict(extra="forbid")

    format: str = REPORT_FORMAT
    version: int = REPORT_VERSION
    std_kind: str = "population"
    config: dict
    iterations: List[IterationResult]
    aggregate: Dict[str, MetricSummary]
    n_skipped: int
    n_excluded_patients: int
    presence_ranking: List[Tuple[str, float]] = []

    @model_validator(mode="after")
    def _check_aggregate(self) -> "MetricsReport":
        expected = aggregate_iterations(self.iterations)
        for key, summary in expected.items():
            stored = self.aggregate.get(key)
            if stored is None or stored.n != summary.n:
                raise ValueError(f"聚合项 {key} 与各轮结果不一致")
            for a, b in ((stored.mean, summary.mean), (stored.std, summary.std)):
                if (a is None) != (b is None) or (a is not None and abs(a - b) > AGGREGATE_TOL):
                    raise ValueError(f"聚合项 {key} 与各轮结果不一致: {a} vs {b}")
        return self

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MetricsReport":
        try:
            return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DataError(f"找不到报告文件 '{path}'")


def aggregate_iterations(iterations: Sequence[IterationResult]) -> Dict[str, MetricSummary]:
    kept = [it for it in iterations if not it.skipped]
    return {
        "auc": summarize([it.mean_auc for it in kept]),
        "ap": summarize([it.mean_ap for it in kept]),
        "pooled_auc": summarize([it.pooled_auc for it in kept]),
        "pooled_ap": summarize([it.pooled_ap for it in kept]),
    }


@dataclass
class IterationTable:
    """行 = 轮次；列 = mean_ap + 每个病人一列 0/1（该轮是否在训练集中）"""

    frame: pd.DataFrame

    @property
    def patient_ids(self) -> List[str]:
        return [c[len("patient_"):] for c in self.frame.columns if c.startswith("patient_")]

    @classmethod
    def from_iterations(cls, iterations: Sequence[IterationResult], patient_ids: Sequence[str]) -> "IterationTable":
        rows = []
        for it in iterations:
            members = set(it.train_ids)
            row = {"iteration": it.iteration, "mean_ap": it.mean_ap if it.mean_ap is not None else np.nan}
            row.update({f"patient_{pid}": int(pid in members) for pid in patient_ids})
            rows.append(row)
        columns = ["iteration", "mean_ap", *[f"patient_{pid}" for pid in patient_ids]]
        return cls(pd.DataFrame(rows, columns=columns))

    @classmethod
    def from_arrays(cls, mean_ap: Sequence[float], membership: np.ndarray, patient_ids: Sequence[str]) -> "IterationTable":
        membership = np.asarray(membership)
        if not np.isin(membership, (0, 1)).all():
            raise DataError("出现矩阵的元素只能是 0 / 1")
        frame = pd.DataFrame({"iteration": np.arange(len(mean_ap)), "mean_ap": np.asarray(mean_ap, dtype=np.float64)})
        for k, pid in enumerate(patient_ids):
            frame[f"patient_{pid}"] = membership[:, k].astype(np.int64)
        return cls(frame)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(path, index=False, na_rep="", lineterminator="\n")
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "IterationTable":
        frame = pd.read_csv(path, float_precision="round_trip")
        if "mean_ap" not in frame.columns:
            raise DataError(f"'{path}' 缺少 mean_ap 列")
        return cls(frame)


def presence_correlation(table: IterationTable) -> Dict[str, Optional[float]]:
    """
    每个病人的 0/1 出现列与 mean_ap 列的 Pearson 相关系数；
    列为常数（或有效轮次少于 2）时相关系数未定义，记为 None
    """
    frame = table.frame[table.frame["mean_ap"].notna()]
    ap = frame["mean_ap"].to_numpy(dtype=np.float64)
    result: Dict[str, Optional[float]] = {}
    for pid in table.patient_ids:
        member = frame[f"patient_{pid}"].to_numpy(dtype=np.float64)
        if ap.size < 2:
            result[pid] = None
            continue
        dm, da = member - member.mean(), ap - ap.mean()
        denom = np.sqrt((dm * dm).sum() * (da * da).sum())
        result[pid] = float(np.clip((dm * da).sum() / denom, -1.0, 1.0)) if denom > 0 else None
    return result


def rank_by_magnitude(correlations: Dict[str, Optional[float]]) -> List[Tuple[str, float]]:
    """按 |r| 降序排列已定义的相关系数，同值按病人编号"""
    defined = [(pid, r) for pid, r in correlations.items() if r is not None]
    return sorted(defined, key=lambda item: (-abs(item[1]), item[0]))


@dataclass
class ProjectionSample:
    """某一轮测试病人的嵌入与标签（用于 t-SNE）"""

    iteration: int
    Z: np.ndarray
    labels: np.ndarray


@dataclass
class ExperimentResult:
    report: MetricsReport
    table: IterationTable
    correlations: Dict[str, Optional[float]] = field(default_factory=dict)
    projection: Optional[ProjectionSample] = None


def _score_patients(records: Sequence[PatientRecord], scores: Dict[str, np.ndarray]) -> List[PatientScore]:
    patients = []
    for r in records:
        entry = PatientScore(patient_id=r.patient_id, n_samples=r.N, ih_fraction=float(np.mean(r.y == 1)))
        try:
            entry.auc = auc(scores[r.patient_id], r.y)
            entry.ap = average_precision(scores[r.patient_id], r.y)
        except UndefinedMetricError as e:
            entry.auc = entry.ap = None
            entry.excluded_reason = str(e)
            logger.info("patient excluded from metrics", patient_id=r.patient_id, reason=str(e))
        patients.append(entry)
    return patients


def iteration_seeds(master_seed: int, iteration: int) -> Tuple[int, int]:
    """(划分种子, 训练种子)；划分种子 = master_seed + iteration"""
    train_seed = int(np.random.SeedSequence([master_seed, iteration]).generate_state(1)[0])
    return master_seed + iteration, train_seed


def run_iteration(
    records: Sequence[PatientRecord],
    cfg: ExperimentConfig,
    iteration: int,
    keep_projection: bool = False,
) -> Tuple[IterationResult, Optional[ProjectionSample]]:
    split_seed, train_seed = iteration_seeds(cfg.master_seed, iteration)
    plan = split_cohort(records, seed=split_seed, train_fraction=cfg.preprocess.train_fraction)
    train_records = select_records(records, plan.train_ids)
    test_records = select_records(records, plan.test_ids)

    train_cfg = cfg.train.model_copy(update={"seed": train_seed})
    params, trace = CollaborativeTrainer(train_cfg, cfg.model).train(train_records)
    refs = ReferenceSet(train_records).limit(cfg.inference.max_references)
    scores = infer_cohort(refs, test_records, params)

    patients = _score_patients(test_records, scores)
    defined = [p for p in patients if p.auc is not None]
    confusion = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for r in test_records:
        for key, value in confusion_counts(scores[r.patient_id], r.y, cfg.inference.threshold).items():
            confusion[key] += value

    result = IterationResult(
        iteration=iteration,
        split_seed=split_seed,
        train_seed=train_seed,
        train_ids=plan.train_ids,
        test_ids=plan.test_ids,
        patients=patients,
        n_excluded=len(patients) - len(defined),
        skipped=not defined,
        mean_auc=float(np.mean([p.auc for p in defined])) if defined else None,
        mean_ap=float(np.mean([p.ap for p in defined])) if defined else None,
        confusion=confusion,
        final_train_loss=trace.epoch_losses[-1],
    )
    if cfg.eval.pooled:
        pooled_scores = np.concatenate([scores[r.patient_id] for r in test_records])
        pooled_labels = np.concatenate([r.y for r in test_records])
        try:
            result.pooled_auc = auc(pooled_scores, pooled_labels)
            result.pooled_ap = average_precision(pooled_scores, pooled_labels)
        except UndefinedMetricError as e:
            logger.info("pooled metrics undefined", iteration=iteration, reason=str(e))
    if result.skipped:
        logger.warning("iteration skipped: no test patient has both classes", iteration=iteration)
    else:
        logger.info(
            "iteration finished",
            iteration=iteration,
            mean_auc=round(result.mean_auc, 4),
            mean_ap=round(result.mean_ap, 4),
            excluded=result.n_excluded,
        )

    projection = None
    if keep_projection:
        embeddings = embed_records(test_records, params)
        projection = ProjectionSample(
            iteration=iteration,
            Z=np.concatenate([e.Z for e in embeddings], axis=0),
            labels=np.concatenate([r.y for r in test_records]),
        )
    return result, projection


async def _run_iterations(records, cfg: ExperimentConfig, jobs: int) -> List[tuple]:
    semaphore = asyncio.Semaphore(max(1, jobs))

    async def one(k: int):
        async with semaphore:
            return await asyncio.to_thread(run_iteration, records, cfg, k, k == cfg.eval.tsne_iteration)

    return await asyncio.gather(*(one(k) for k in range(cfg.eval.n_iterations)))


async def run_experiment_async(
    records: Sequence[PatientRecord],
    cfg: Optional[ExperimentConfig] = None,
    jobs: Optional[int] = None,
) -> ExperimentResult:
    """
    n_iterations 轮独立实验；jobs > 1 时各轮在工作线程中并行，结果按轮次序号合并
    """
    cfg = validate_config(ExperimentConfig, cfg or {})
    if len(records) < MIN_COHORT:
        raise DataError(f"重复实验至少需要 {MIN_COHORT} 个病人，实际 {len(records)}")
    jobs = jobs or cfg.jobs
    logger.info(
        "experiment started",
        n_patients=len(records),
        n_iterations=cfg.eval.n_iterations,
        master_seed=cfg.master_seed,
        jobs=jobs,
    )
    outcomes = await _run_iterations(list(records), cfg, jobs)
    outcomes = sorted(outcomes, key=lambda pair: pair[0].iteration)
    iterations = [result for result, _ in outcomes]
    projection = next((p for _, p in outcomes if p is not None), None)

    patient_ids = [r.patient_id for r in records]
    table = IterationTable.from_iterations(iterations, patient_ids)
    correlations = presence_correlation(table)
    report = MetricsReport(
        config=cfg.model_dump(mode="json"),
        iterations=iterations,
        aggregate=aggregate_iterations(iterations),
        n_skipped=sum(it.skipped for it in iterations),
        n_excluded_patients=sum(it.n_excluded for it in iterations),
        presence_ranking=rank_by_magnitude(correlations),
    )
    summary = report.aggregate
    logger.info(
        "experiment finished",
        auc_mean=summary["auc"].mean,
        auc_std=summary["auc"].std,
        ap_mean=summary["ap"].mean,
        ap_std=summary["ap"].std,
        skipped=report.n_skipped,
    )
    return ExperimentResult(report=report, table=table, correlations=correlations, projection=projection)


def run_experiment(
    records: Sequence[PatientRecord],
    cfg: Optional[ExperimentConfig] = None,
    jobs: Optional[int] = None,
) -> ExperimentResult:
    return asyncio.run(run_experiment_async(records, cfg, jobs))


def project_sample(sample: ProjectionSample, cfg: ExperimentConfig) -> Tuple[np.ndarray, np.ndarray]:
    """分层抽样到 tsne_max_points 行后做 t-SNE，返回 (坐标, 标签)"""
    keep = stratified_subsample(cfg.eval.tsne_max_points, sample.labels, seed=cfg.master_seed)
    coords = tsne_project(
        sample.Z[keep], perplexity=cfg.eval.tsne_perplexity, iters=cfg.eval.tsne_iters, seed=cfg.master_seed
    )
    return coords, sample.labels[keep]


def write_outputs(result: ExperimentResult, cfg: ExperimentConfig, outdir: Union[str, Path]) -> List[Path]:
    """metrics_report.json、iteration_table.csv、correlations.svg、tsne_costate.svg"""
    outdir = Path(outdir)
    written = [
        result.report.save(outdir / "metrics_report.json"),
        result.table.to_csv(outdir / "iteration_table.csv"),
    ]
    projections = {}
    if result.projection is not None:
        projections["costate"] = project_sample(result.projection, cfg)
    written.extend(render_plots(result.report, list(result.correlations.values()), projections, outdir))
    return written
