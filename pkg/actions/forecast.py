"""
Forecast action for the DAN simulator
Trains YIdentityNet on a dataset file or a cached synthetic dataset
"""

from pathlib import Path

from .base import BaseAction, EXIT_OK
from config import config
from dataset_store import DatasetStore
from errors import IoError, ParseError
from graph_dataset import GraphDataset
from scenario import load_forecast_job
from ynet_forecaster import ModelConfig, TrainConfig, YIdentityNet, evaluate, train


class ForecastAction(BaseAction):
    """Action to train the forecaster and compare it with the persistence baseline"""

    def __init__(self, store: DatasetStore = None):
        self.store = store

    def run(self, dataset_path=None, config_path=None, out_dir=None, no_cache=False):
        print("🚀 DAN Simulator - Forecast")
        print("=" * 40)
        return self._run_guarded(dataset_path=dataset_path, config_path=config_path,
                                 out_dir=out_dir, no_cache=no_cache)

    def _load_dataset(self, dataset_path, job, no_cache):
        if dataset_path:
            path = Path(dataset_path)
            if not path.with_suffix(".json").exists():
                raise ParseError(f"dataset {path} does not exist")
            print(f"📂 Loading dataset {path}")
            return GraphDataset.load(path)

        params = job.synthetic.params()
        store = self.store or DatasetStore()
        cached = None if no_cache else store.get_cached_dataset(params)
        if cached is not None:
            print(f"📋 Using cached synthetic dataset {store._generate_cache_key(params)}")
            return cached
        print(f"🧪 Generating synthetic dataset (N={params['N']}, T={params['T']}, "
              f"H={params['H']}, {params['n_sequences']} sequences)")
        return store.get_or_generate(params, use_cache=not no_cache)

    def _execute(self, dataset_path=None, config_path=None, out_dir=None, no_cache=False):
        job = load_forecast_job(config_path)
        dataset = self._load_dataset(dataset_path, job, no_cache)
        train_set, test_set = dataset.split(job.train.train_fraction)
        if len(train_set) == 0:
            raise ParseError(f"train_fraction {job.train.train_fraction} leaves no training samples")

        m = job.model
        model = YIdentityNet(ModelConfig(
            n_nodes=dataset.N, in_channels=dataset.C, history=dataset.T, horizon=dataset.H,
            hidden=m.hidden, blocks=m.blocks, kernel_size=m.kernel_size,
            diffusion_steps=m.diffusion_steps, padding=m.padding, seed=m.seed,
        ))
        t = job.train
        tc = TrainConfig(steps=t.steps, learning_rate=t.learning_rate, optimizer=t.optimizer,
                         batch_size=t.batch_size or None, seed=t.seed)
        print(f"🏋️  Training {t.steps} steps on {len(train_set)} samples ({t.optimizer}, lr={t.learning_rate})")
        result = train(model, train_set, tc)
        scores = evaluate(model, test_set if len(test_set) else train_set)

        out = Path(out_dir) if out_dir else Path(config.get_var_dir()) / "forecasts" / f"seed-{dataset.seed}"
        try:
            out.mkdir(parents=True, exist_ok=True)
            result.export_csv(out / "loss.csv")
            model.save(out / "model.ckpt")
        except OSError as e:
            raise IoError(f"cannot write forecast artifacts to {out}: {e}") from e

        if result.losses:
            print(f"📉 Loss: {result.losses[0]:.6g} -> {result.losses[-1]:.6g}")
        print(f"✅ Model MSE:    {scores['model_mse']:.6g}")
        print(f"📏 Baseline MSE: {scores['baseline_mse']:.6g}")
        print(f"💾 Artifacts written to {out}")
        return EXIT_OK
