from .encoder import (
    ModelParams, EmbeddingSequence, lstm_forward, self_attention, cross_channel_attention,
    project, encode, encode_tensor, encode_many, embed_records,
)
from .objective import cosine_similarity_matrix, target_matrix, pair_loss, GramSummary, gram_summary, gram_pair_loss
from .trainer import TrainTrace, CollaborativeTrainer, accumulate_anchor_gradients, train, checkpoint, restore
from .inference import (
    ReferenceSet, infer_single, infer_from_similarity, collaborative_infer, infer_cohort,
    binarize, confusion_counts, write_predictions,
)
from .vae import VaeParams, VaeOutput, kl_divergence, vae_elbo, extract_windows, vae_train, vae_embed

__all__ = [
    'ModelParams', 'EmbeddingSequence', 'lstm_forward', 'self_attention', 'cross_channel_attention',
    'project', 'encode', 'encode_tensor', 'encode_many', 'embed_records',
    'cosine_similarity_matrix', 'target_matrix', 'pair_loss', 'GramSummary', 'gram_summary', 'gram_pair_loss',
    'TrainTrace', 'CollaborativeTrainer', 'accumulate_anchor_gradients', 'train', 'checkpoint', 'restore',
    'ReferenceSet', 'infer_single', 'infer_from_similarity', 'collaborative_infer', 'infer_cohort',
    'binarize', 'confusion_counts', 'write_predictions',
    'VaeParams', 'VaeOutput', 'kl_divergence', 'vae_elbo', 'extract_windows', 'vae_train', 'vae_embed',
]
