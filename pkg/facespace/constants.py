"""
Tolerance below which a Gram-Schmidt residual norm marks a row as degenerate.
"""

DEGENERACY_TOLERANCE = 1e-10

"""
Default clamp of cosine denominators (the small constant of the identity
similarity loss).
"""

COSINE_EPS = 1e-8

"""
Default step for central finite differences.
"""

FD_STEP = 1e-4

"""
Magic bytes and format version of the binary checkpoint file.
"""

CHECKPOINT_MAGIC = b"SDSP"
CHECKPOINT_VERSION = 1

"""
Subspace sizes of the full face model (20 basis vectors per subspace, 512
dimensions each) and of the synthetic benchmark.
"""

FACE_DIMS = {"p": 20, "q": 20, "n": 512}
SYNTHETIC_DIMS = {"p": 8, "q": 8, "n": 64}

"""
Hidden width of every encoder, decoder, discriminator and classifier MLP.
"""

HIDDEN_WIDTH = 64

"""
Fewest samples per identity a linear probe accepts, so every identity lands in
both sides of the stratified split.
"""

MIN_PROBE_SAMPLES = 4

"""
Fixed file names inside a run's output directory.
"""

RESOLVED_CONFIG = "config.resolved"
METRICS_FILE = "metrics.csv"
CHECKPOINT_FILE = "model.ckpt"
BASIS_FILE = "basis.txt"
EVAL_DIR = "eval"
ABLATION_FILE = "ablation.csv"
