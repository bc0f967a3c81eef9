from typing import List, Optional

import numpy as np

from costate.cli import CommandBase, CONFIG_PARAMETERS
from costate.data import select_records, split_cohort
from costate.evaluation import ProjectionSample, project_sample, projection_scatter
from costate.model import CollaborativeTrainer, embed_records, vae_embed, vae_train


class Vae(CommandBase):
    parameters = {
        **CONFIG_PARAMETERS,
        "data": (Optional[str], "CSV 队列目录；不给时按配置生成合成队列"),
        "out": (Optional[str], "输出目录（默认取配置中的 output_dir）"),
    }

    async def run(
        self, config: Optional[str] = None, overrides: List[str] = (),
        data: Optional[str] = None, out: Optional[str] = None,
    ):
        cfg = self.load_config(config, overrides)
        outdir = self.ensure_dir(out or cfg.output_dir)
        records = self.load_cohort(cfg, data)
        plan = split_cohort(records, seed=cfg.master_seed, train_fraction=cfg.preprocess.train_fraction)
        train_records = select_records(records, plan.train_ids)
        test_records = select_records(records, plan.test_ids)

        params, _ = CollaborativeTrainer(cfg.train, cfg.model).train(train_records)
        vae_params, history = vae_train(train_records, cfg.vae, latent_size=cfg.model.latent_size, seed=cfg.master_seed)
        digest = vae_params.save(outdir / "vae_checkpoint.json")

        labels = np.concatenate([r.y for r in test_records])
        embeddings = {
            "costate": [e.Z for e in embed_records(test_records, params)],
            "vae": [vae_embed(r.X, vae_params, r.patient_id).Z for r in test_records],
        }
        titles = {"costate": "t-SNE: collaborative encoder", "vae": "t-SNE: LSTM-VAE"}
        for name, parts in embeddings.items():
            sample = ProjectionSample(iteration=0, Z=np.concatenate(parts, axis=0), labels=labels)
            coords, kept = project_sample(sample, cfg)
            projection_scatter(coords, kept, outdir / f"tsne_{name}.svg", title=titles[name])

        self.console.print(
            f"[green]vae[/green] final loss {history[-1]:.6f}, checkpoint sha256 {digest}, "
            f"projections for {len(test_records)} test patients -> {outdir}"
        )
        return digest
