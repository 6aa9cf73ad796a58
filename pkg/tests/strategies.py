"""Shared hypothesis strategies for points and configurations."""
from hypothesis import strategies as st

coord = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)
small_int = st.integers(min_value=-3, max_value=3).map(float)


def points(d, min_size=1, max_size=8, elements=coord):
    return st.lists(st.tuples(*[elements] * d), min_size=min_size, max_size=max_size)


@st.composite
def point_sets(draw, max_dim=3, min_size=1, max_size=8, lattice=None):
    d = draw(st.integers(1, max_dim))
    use_lattice = draw(st.booleans()) if lattice is None else lattice
    elems = small_int if use_lattice else coord
    return draw(points(d, min_size, max_size, elems))
