"""Analysis services: input loading, estimation, factor analysis, networks and output."""
