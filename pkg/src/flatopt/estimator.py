"""scikit-learn-style classifier trained by the perturbed-gradient family.

``PerturbedGradientClassifier`` wraps the tanh-MLP objective and any of the
named optimizers behind the usual ``fit`` / ``predict`` / ``predict_proba``
surface, so the optimizers compose with pipelines, grid search, and
cross-validation. Training is bit-reproducible for a fixed ``seed``.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_X_y

from .objectives import mlp_objective, softmax
from .optimizers import StepSchedule, make_config
from .training import epoch_budget, mean_sigma2_of, train_loop


class PerturbedGradientClassifier(BaseEstimator, ClassifierMixin):
    """MLP classifier trained with sgd / sam / asam / fsam / rsam / mfvi / vsam.

    Parameters mirror the run-config surface of the CLI. ``schedule`` is a
    tuple of ``(epoch, multiplier)`` breakpoints. With
    ``epoch_parity='flops'`` the once-backpropagating optimizers train for
    twice as many epochs (and a stretched schedule), equalizing gradient
    evaluations across optimizer choices.
    """

    def __init__(
        self,
        optimizer="sam",
        hidden_layer_sizes=(32,),
        rho=0.05,
        sigma0=1.0,
        learning_rate=0.1,
        lr_sigma=0.01,
        momentum=0.9,
        weight_decay=0.0005,
        label_smoothing=0.0,
        schedule=(),
        epochs=100,
        batch_size=128,
        epoch_parity="equal",
        asam_rule="table1",
        fisher_damping=1e-8,
        seed=0,
    ):
        self.optimizer = optimizer
        self.hidden_layer_sizes = hidden_layer_sizes
        self.rho = rho
        self.sigma0 = sigma0
        self.learning_rate = learning_rate
        self.lr_sigma = lr_sigma
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.label_smoothing = label_smoothing
        self.schedule = schedule
        self.epochs = epochs
        self.batch_size = batch_size
        self.epoch_parity = epoch_parity
        self.asam_rule = asam_rule
        self.fisher_damping = fisher_damping
        self.seed = seed

    def fit(self, X, y, eval_set=None):
        """Train on (X, y); optionally track (X_eval, y_eval) metrics per epoch."""
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise ValueError("need at least two classes")
        self.n_features_in_ = X.shape[1]
        widths = (X.shape[1], *self.hidden_layer_sizes, self.classes_.size)
        objective = mlp_objective(widths, label_smoothing=self.label_smoothing)
        effective_epochs, factor = epoch_budget(self.optimizer, self.epochs, self.epoch_parity)
        config = make_config(
            self.optimizer,
            p=objective.p,
            num_data=X.shape[0],
            rho=self.rho,
            sigma0=self.sigma0,
            lr=self.learning_rate,
            lr_sigma=self.lr_sigma,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            schedule=StepSchedule(tuple(self.schedule)).scaled(factor),
            seed=self.seed,
            asam_rule=self.asam_rule,
            fisher_damping=self.fisher_damping,
        )
        theta0 = objective.init_params(self.seed)
        history = []
        train_batch = (X, encoded)
        if eval_set is not None:
            X_eval, y_eval = eval_set
            X_eval = check_array(X_eval, dtype=np.float64)
            eval_encoded = np.searchsorted(self.classes_, np.asarray(y_eval))
            eval_batch = (X_eval, eval_encoded)
        else:
            eval_batch = None

        def on_epoch(epoch, state, wall_ms):
            row = {
                "epoch": epoch,
                "train_loss": float(objective.value(state.mu, train_batch)),
                "train_acc": float(objective.accuracy(state.mu, train_batch)),
                "mean_sigma2": mean_sigma2_of(state, config),
                "wall_ms": wall_ms,
            }
            if eval_batch is not None:
                row["test_loss"] = float(objective.value(state.mu, eval_batch))
                row["test_acc"] = float(objective.accuracy(state.mu, eval_batch))
            history.append(row)

        final = train_loop(
            objective,
            theta0,
            train_batch,
            config,
            effective_epochs,
            self.batch_size,
            self.seed,
            on_epoch,
        )
        self.objective_ = objective
        self.mu_ = final.mu
        self.sigma2_ = final.sigma2
        self.history_ = history
        self.effective_epochs_ = effective_epochs
        return self

    def _check_is_fitted(self):
        if not hasattr(self, "mu_"):
            raise NotFittedError("fit must be called before predicting")

    def decision_function(self, X):
        self._check_is_fitted()
        X = check_array(X, dtype=np.float64)
        return self.objective_.logits(self.mu_, X)

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
