from hypothesis import settings

# property tests share the box with training runs; wall-clock deadlines flake
settings.register_profile("no_deadline", deadline=None)
settings.load_profile("no_deadline")
