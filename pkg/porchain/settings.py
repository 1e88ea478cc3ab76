"""
Settings - Configuration management for porchain
"""

from pathlib import Path
from typing import Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class PorchainSettings(BaseSettings):
    """Runtime configuration, read from PORCHAIN_* environment variables and .env"""

    model_config = SettingsConfigDict(
        env_prefix="PORCHAIN_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # General settings
    server_name: str = Field(default="porchain", description="Name announced by the MCP server")
    log_level: str = Field(default="INFO", description="Root log level for entry points")
    seed: Optional[str] = Field(
        default=None, description="Hex seed making whole runs reproducible (--seed fallback)"
    )

    # Scheme defaults
    default_scheme: str = Field(default="aub", description="aub or ppaub")
    aub_sectors: int = Field(default=1000, ge=1, description="Sectors per block under AuB")
    query_size: int = Field(default=11, ge=1, description="Challenged blocks per query (l)")
    audit_count: int = Field(default=10, ge=1, description="Queries per audit session (K)")

    # Contract terms
    c_s: int = Field(default=100, ge=0, description="Fee paid to an honest server")
    c_a: int = Field(default=50, ge=0, description="Fee paid to an honest auditor")
    deposit_s: int = Field(default=200, ge=0, description="Server channel deposit")
    deposit_a: int = Field(default=200, ge=0, description="Auditor channel deposit")
    dispute_window: int = Field(default=5, ge=1, description="Blocks the server has to rebut")
    initial_balance: int = Field(default=1000, ge=0, description="Genesis allocation per actor")

    # Privacy settings
    aub_max_queries: Optional[int] = Field(
        default=None, ge=1, description="Override of the AuB per-channel query cap (l - 1)"
    )

    # Ledger simulation
    block_wait_seconds: float = Field(
        default=0.0, ge=0.0, description="Simulated latency charged per mined block"
    )
    tx_log_path: Optional[Path] = Field(
        default=None, description="Where run writes the replayable transaction log"
    )

    # Storage
    data_dir: Optional[Path] = Field(
        default=None, description="Root for server stores; a temporary directory when unset"
    )

    # Owner acting as its own auditor
    owner_as_auditor: bool = Field(default=False, description="Run the auditor with owner keys")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Invalid log level: {v}")
        return v.upper()

    @field_validator("default_scheme")
    @classmethod
    def validate_scheme(cls, v: str) -> str:
        if v.lower() not in ("aub", "ppaub"):
            raise ValueError(f"Invalid scheme: {v}")
        return v.lower()

    @field_validator("seed")
    @classmethod
    def validate_seed(cls, v: Optional[str]) -> Optional[str]:
        if v is None or v == "":
            return None
        try:
            raw = bytes.fromhex(v)
        except ValueError:
            raise ValueError(f"Invalid seed, expected hex: {v}")
        if not 1 <= len(raw) <= 64:
            raise ValueError(f"Seed must be 1 to 64 bytes, got {len(raw)}")
        return v.lower()

    @field_validator("data_dir")
    @classmethod
    def validate_data_dir(cls, v: Optional[Path]) -> Optional[Path]:
        """Ensure the store root exists"""
        if v is not None and not v.exists():
            v.mkdir(parents=True, exist_ok=True)
        return v


# Global settings instance
settings = PorchainSettings()


def get_settings() -> PorchainSettings:
    """Get current settings"""
    return settings
