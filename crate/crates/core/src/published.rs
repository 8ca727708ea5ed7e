//! Published parameter counts, bundled so audits run without any external file.

use serde::Deserialize;

use crate::blocks::BlockKind;
use crate::cascade::{audit_params, plan_network, AuditReport, CascadeConfig, Ecn, Scale};
use crate::error::{Error, Result};

const TABLE: &str = include_str!("../data/param_tables.csv");

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct PublishedCount {
    pub group: String,
    pub block: BlockKind,
    pub init_channels: usize,
    pub scale: Scale,
    pub classes: usize,
    pub params: usize,
}

impl PublishedCount {
    /// 32×32 input, default growth, threshold and iterations.
    pub fn config(&self) -> CascadeConfig {
        CascadeConfig::new(self.block, self.init_channels, self.scale, self.classes)
    }

    pub fn label(&self) -> String {
        format!(
            "{} block {} init {} scale {} classes {}",
            self.group, self.block, self.init_channels, self.scale, self.classes
        )
    }
}

pub fn published_counts() -> Result<Vec<PublishedCount>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(TABLE.as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Manifest(format!("bundled parameter table: {e}")))
}

#[derive(Debug)]
pub struct CellOutcome {
    pub cell: PublishedCount,
    /// The instantiated network's audit, or why it could not be produced.
    pub audit: Result<AuditReport>,
}

impl CellOutcome {
    pub fn passed(&self) -> bool {
        matches!(&self.audit, Ok(r) if r.total == self.cell.params)
    }
}

/// Plans and instantiates the cell's network, then audits it.
pub fn check_cell(cell: &PublishedCount) -> CellOutcome {
    let audit = plan_network(&cell.config())
        .and_then(|plan| Ecn::<f32>::new(plan, 0))
        .and_then(|model| audit_params(&model.plan, &model.store));
    CellOutcome {
        cell: cell.clone(),
        audit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_shape() {
        let rows = published_counts().unwrap();
        let count = |g: &str| rows.iter().filter(|r| r.group == g).count();
        assert_eq!((count("blocks-10"), count("blocks-100")), (54, 54));
        assert_eq!((count("headline-10"), count("headline-100")), (5, 5));
    }
}
