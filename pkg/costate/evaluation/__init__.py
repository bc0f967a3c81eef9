from .metrics import auc, average_precision, patient_metrics
from .tsne import TSNEProjector, joint_probabilities, student_t_affinities, tsne_project, stratified_subsample
from .plots import render_plots, correlation_histogram, projection_scatter
from .experiment import (
    MetricsReport, IterationResult, IterationTable, ExperimentResult, ProjectionSample,
    run_experiment, run_experiment_async, run_iteration, presence_correlation, rank_by_magnitude, project_sample, write_outputs,
)

__all__ = [
    'auc', 'average_precision', 'patient_metrics',
    'TSNEProjector', 'joint_probabilities', 'student_t_affinities', 'tsne_project', 'stratified_subsample',
    'render_plots', 'correlation_histogram', 'projection_scatter',
    'MetricsReport', 'IterationResult', 'IterationTable', 'ExperimentResult', 'ProjectionSample',
    'run_experiment', 'run_experiment_async', 'run_iteration', 'presence_correlation', 'rank_by_magnitude', 'project_sample', 'write_outputs',
]
