use hmac::{Hmac, Mac};
use sha2::Sha256;

use super::DataPanel;
use crate::macro_agent::MacroSeries;

const ASSET_TAG: &str = "asset";
const INDUSTRY_TAG: &str = "industry";

/// Keyed pseudonym: first 12 hex chars of HMAC-SHA256(salt, kind ‖ 0x00 ‖ id).
pub fn pseudonym(salt: &[u8], kind: &str, id: &str) -> String {
    let mut mac = Hmac::<Sha256>::new_from_slice(salt).expect("HMAC accepts any key length");
    mac.update(kind.as_bytes());
    mac.update(&[0]);
    mac.update(id.as_bytes());
    let digest = mac.finalize().into_bytes();
    hex::encode(&digest[..6])
}

/// Replaces asset ids and industry codes with keyed pseudonyms. Asset order
/// and every numeric series are left untouched.
pub fn obfuscate(panel: &DataPanel, salt: &[u8]) -> DataPanel {
    panel.map_identifiers(
        |a| pseudonym(salt, ASSET_TAG, a),
        |j| pseudonym(salt, INDUSTRY_TAG, j),
    )
}

/// Renames industries of a macro series consistently with [`obfuscate`].
pub fn obfuscate_macro(series: &MacroSeries, salt: &[u8]) -> MacroSeries {
    series.map_industries(|j| pseudonym(salt, INDUSTRY_TAG, j))
}
