"""Box norms, polynomial progression counts and PET differencing over F_p^D."""

__version__ = "0.1.0"
