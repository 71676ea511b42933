"""Dense-traffic simulation with predictive IDM drivers."""
