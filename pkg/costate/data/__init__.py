from .records import RawRecording, PatientRecord
from .datagen import generate_cohort
from .csv_io import read_csv_cohort, write_csv_cohort
from .preprocess import (
    SplitPlan, run_lengths, filter_artifacts, label_ih, standardize, build_patient_record,
    prepare_record, prepare_cohort, select_by_coverage, split_cohort, select_records, save_archive, load_archive,
)

__all__ = [
    'RawRecording', 'PatientRecord', 'generate_cohort', 'read_csv_cohort', 'write_csv_cohort',
    'SplitPlan', 'run_lengths', 'filter_artifacts', 'label_ih', 'standardize', 'build_patient_record',
    'prepare_record', 'prepare_cohort', 'select_by_coverage', 'split_cohort', 'select_records', 'save_archive', 'load_archive',
]
