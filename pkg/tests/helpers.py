from meshlift.mesh import GridSpec, Mesh


def random_mesh(rng, grid: GridSpec, amp: int = 2) -> Mesh:
    """Mesh with random vectors on free components only."""
    mesh = Mesh(grid)
    vec = rng.integers(-amp, amp + 1, size=mesh.vectors.shape)
    vec[~mesh.free_mask()] = 0
    return Mesh(grid, vec)


def random_volume(rng, dims, hi=4095):
    w, h, d = dims
    return rng.integers(0, hi + 1, size=(d, h, w))
