from .gen.gen import Gen
from .prep.prep import Prep
from .train.train import Train
from .infer.infer import Infer
from .experiment.experiment import Experiment
from .ablate.ablate import Ablate
from .vae.vae import Vae

ALL_COMMANDS = [Gen, Prep, Train, Infer, Experiment, Ablate, Vae]
