use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::structure_preservation::StructureScale;
use crate::style_injection::{GateConfig, GateMode};
use crate::synthdata::STRUCTURE_CHANNELS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    /// Latent grid `[H, W]`; tokens `N = H·W`.
    pub grid: [usize; 2],
    pub width: usize,
    pub blocks: usize,
    pub style_tokens: usize,
    pub structure_channels: usize,
    /// Per-block structure injection switch; empty means every block.
    pub spm_sites: Vec<bool>,
    pub alpha: f64,
    pub gate: GateMode,
    pub gamma: f64,
    /// Sampling steps `T`.
    pub steps: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            grid: [8, 8],
            width: 16,
            blocks: 6,
            style_tokens: 4,
            structure_channels: STRUCTURE_CHANNELS,
            spm_sites: Vec::new(),
            alpha: 0.5,
            gate: GateMode::Learned,
            gamma: 0.7,
            steps: 8,
        }
    }
}

impl BackboneConfig {
    pub fn tokens(&self) -> usize {
        self.grid[0] * self.grid[1]
    }

    pub fn grid_hw(&self) -> (usize, usize) {
        (self.grid[0], self.grid[1])
    }

    pub fn gate_config(&self) -> Result<GateConfig> {
        GateConfig::new(self.alpha, self.gate)
    }

    pub fn structure_scale(&self) -> Result<StructureScale> {
        StructureScale::new(self.gamma)
    }

    pub fn spm_enabled(&self, block: usize) -> bool {
        self.spm_sites
            .get(block)
            .copied()
            .unwrap_or(self.spm_sites.is_empty())
    }

    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("grid height", self.grid[0]),
            ("grid width", self.grid[1]),
            ("width", self.width),
            ("blocks", self.blocks),
            ("style_tokens", self.style_tokens),
            ("structure_channels", self.structure_channels),
            ("steps", self.steps),
        ];
        if let Some((name, _)) = extents.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.spm_sites.is_empty() && self.spm_sites.len() != self.blocks {
            return Err(Error::Config(format!(
                "spm_sites has {} entries for {} blocks",
                self.spm_sites.len(),
                self.blocks
            )));
        }
        if self.width < 3 {
            return Err(Error::Config("width must be ≥ 3 to carry RGB".into()));
        }
        self.gate_config()?;
        self.structure_scale()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = BackboneConfig::default();
        c.validate().unwrap();
        assert_eq!(c.tokens(), 64);
        assert!((0..6).all(|i| c.spm_enabled(i)));
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let mut c = BackboneConfig {
            blocks: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.blocks = 3;
        c.spm_sites = vec![true, false];
        assert!(c.validate().is_err());
        c.spm_sites = vec![true, false, true];
        c.validate().unwrap();
        assert!(!c.spm_enabled(1));
        c.alpha = 2.0;
        assert!(c.validate().is_err());
        c.alpha = 0.5;
        c.gamma = -1.0;
        assert!(c.validate().is_err());
    }
}
