"""Click commands of the geotrade command-line interface."""
