from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Project
    project_name: str = 'Q-map all-goals learning'
    log_level: str = 'INFO'

    # Output locations
    output_dir: str = './runs'

    # Evaluation
    eval_workers: int = 4
    eval_every: int = 5_000  # updates
    checkpoint_every: int = 0  # 0 means: same cadence as eval_every

    # Reproducibility
    default_seed: int = 0

    class Config:
        env_file = '.env'
        env_prefix = 'QMAP_'
        case_sensitive = False

    @property
    def checkpoint_cadence(self) -> int:
        return self.checkpoint_every or self.eval_every


settings = Settings()
