"""Model pieces grouped by family; import submodules explicitly."""

__all__: list[str] = []
