from .linalg import modified_gram_schmidt, orthonormality_residual, column_residuals
