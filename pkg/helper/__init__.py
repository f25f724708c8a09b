"""Helper modules for the subsampling toolkit."""
