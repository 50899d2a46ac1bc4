# Typing
from typing import TypedDict


class StepRow(TypedDict):
    """One line of ``metrics.csv``: the loss components of a training
    step, as seen by the generator update. Components disabled by the ablation
    level are reported as 0.

    Example:
    ```
    {
        "step": 120,
        "L_recon": 0.0153,
        "L_s": -0.981,
        "L_d": 2.77,
        "L_r": 0.042,
        "L_id": 0.31,
        "total": -1.86
    }
    ```
    """

    step: int
    L_recon: float
    L_s: float
    L_d: float
    L_r: float
    L_id: float
    total: float


class ProbeRow(TypedDict):
    """Result of one linear probe. ``target`` names the descriptor the identity
    label was predicted from.

    Example:
    ```
    {
        "target": "identity-from-w_m",
        "train_accuracy": 0.141,
        "test_accuracy": 0.082,
        "chance": 0.0625,
        "split_seed": 0
    }
    ```
    """

    target: str
    train_accuracy: float
    test_accuracy: float
    chance: float
    split_seed: int


class ClusterRow(TypedDict):
    """Clustering of identity descriptors for one identity. The row with
    identity ``"all"`` carries the mean silhouette over every sample.

    Example:
    ```
    {
        "identity": "3",
        "count": 64,
        "silhouette": 0.74,
        "intra_distance": 0.18,
        "nearest_centroid_distance": 1.92
    }
    ```
    """

    identity: str
    count: int
    silhouette: float
    intra_distance: float
    nearest_centroid_distance: float


class ZeroedRow(TypedDict):
    """Nearest-centroid identity accuracy of outputs decoded with one
    descriptor zeroed. ``"zero-motion"`` should be high, ``"zero-identity"``
    near chance.

    Example:
    ```
    {
        "branch": "zero-motion",
        "identity_accuracy": 0.97,
        "chance": 0.0625
    }
    ```
    """

    branch: str
    identity_accuracy: float
    chance: float


class ProjectionRow(TypedDict):
    """A descriptor projected on the top two principal components.

    Example:
    ```
    {
        "x": 1.204,
        "y": -0.311,
        "identity_label": 5
    }
    ```
    """

    x: float
    y: float
    identity_label: int


class AblationRow(TypedDict):
    """Metrics of one ablation level trained with one seed.

    Example:
    ```
    {
        "level": "decoupling",
        "seed": 1,
        "leakage_accuracy": 0.09,
        "identity_accuracy": 0.95,
        "recon_mse": 0.0121,
        "silhouette": 0.61
    }
    ```
    """

    level: str
    seed: int
    leakage_accuracy: float
    identity_accuracy: float
    recon_mse: float
    silhouette: float


class BasisRow(TypedDict):
    """Shape and orthonormality of an exported basis. ``subspace_overlap`` is
    the largest inner product between an identity row and a motion row.

    Example:
    ```
    {
        "rows": 16,
        "cols": 64,
        "orthonormality_error": 4.4e-16,
        "subspace_overlap": 1.1e-16
    }
    ```
    """

    rows: int
    cols: int
    orthonormality_error: float
    subspace_overlap: float
