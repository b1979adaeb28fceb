from src.tensor.tensor import (
    Graph,
    Tensor,
    default_dtype,
    get_default_dtype,
)

__all__ = ['Graph', 'Tensor', 'default_dtype', 'get_default_dtype']
