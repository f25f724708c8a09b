"""Strategy execution and the Monte Carlo experiment grid."""
