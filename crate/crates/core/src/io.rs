//! Binary field files.
//!
//! Layout: the magic `YMRF`, a little-endian `u32` format version, a
//! little-endian `u32` header length, the header as UTF-8 `key=value` lines,
//! then every cell value in enumeration order as little-endian doubles
//! (1/2 doubles per U(1) algebra/group value, 3/4 for SU(2)).
//!
//! Header keys: `kind` (`links`, `cochain` or `gauge`), `group`, `degree`
//! (cochains only), `dims`, `spacing`, `topology`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{Cochain, LinkField};
use crate::gauge::VertexGaugeField;
use crate::grid::{LatticeComplex, Topology};
use crate::group::{Algebra, Group, GroupKind};

pub const MAGIC: &[u8; 4] = b"YMRF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Links,
    Cochain,
    Gauge,
}

impl FieldKind {
    fn as_str(self) -> &'static str {
        match self {
            FieldKind::Links => "links",
            FieldKind::Cochain => "cochain",
            FieldKind::Gauge => "gauge",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldHeader {
    pub kind: FieldKind,
    pub group: GroupKind,
    pub degree: Option<usize>,
    pub dims: [usize; 4],
    pub spacing: f64,
    pub topology: Topology,
}

impl FieldHeader {
    fn for_complex(kind: FieldKind, group: GroupKind, degree: Option<usize>, c: &LatticeComplex) -> Result<Self> {
        if c.topology() == Topology::Surface {
            return Err(Error::Format("surface complexes cannot be written".into()));
        }
        Ok(FieldHeader {
            kind,
            group,
            degree,
            dims: c.dims(),
            spacing: c.spacing(),
            topology: c.topology(),
        })
    }

    pub fn complex(&self) -> Result<Arc<LatticeComplex>> {
        LatticeComplex::new(self.dims, self.spacing, self.topology)
    }

    fn render(&self) -> String {
        let d = self.dims;
        let mut s = format!("kind={}\ngroup={}\n", self.kind.as_str(), self.group);
        if let Some(k) = self.degree {
            s.push_str(&format!("degree={k}\n"));
        }
        s.push_str(&format!(
            "dims={},{},{},{}\nspacing={:?}\ntopology={}\n",
            d[0],
            d[1],
            d[2],
            d[3],
            self.spacing,
            self.topology.as_str()
        ));
        s
    }

    fn parse(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut group = None;
        let mut degree = None;
        let mut dims = None;
        let mut spacing = None;
        let mut topology = None;
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("header line `{line}` has no `=`")))?;
            let bad = |what: &str| Error::Format(format!("bad {what} `{value}`"));
            match key {
                "kind" => {
                    kind = Some(match value {
                        "links" => FieldKind::Links,
                        "cochain" => FieldKind::Cochain,
                        "gauge" => FieldKind::Gauge,
                        _ => return Err(bad("kind")),
                    })
                }
                "group" => group = Some(value.parse::<GroupKind>().map_err(|_| bad("group"))?),
                "degree" => degree = Some(value.parse::<usize>().map_err(|_| bad("degree"))?),
                "dims" => {
                    let parts: Vec<usize> = value
                        .split(',')
                        .map(|p| p.trim().parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("dims"))?;
                    let arr: [usize; 4] = parts.try_into().map_err(|_| bad("dims"))?;
                    dims = Some(arr);
                }
                "spacing" => spacing = Some(value.parse::<f64>().map_err(|_| bad("spacing"))?),
                "topology" => topology = Some(value.parse::<Topology>().map_err(|_| bad("topology"))?),
                other => return Err(Error::Format(format!("unknown header key `{other}`"))),
            }
        }
        let missing = |k: &str| Error::Format(format!("header lacks `{k}`"));
        let kind = kind.ok_or_else(|| missing("kind"))?;
        if (kind == FieldKind::Cochain) != degree.is_some() {
            return Err(Error::Format("`degree` is required for cochains and only for them".into()));
        }
        Ok(FieldHeader {
            kind,
            group: group.ok_or_else(|| missing("group"))?,
            degree,
            dims: dims.ok_or_else(|| missing("dims"))?,
            spacing: spacing.ok_or_else(|| missing("spacing"))?,
            topology: topology.ok_or_else(|| missing("topology"))?,
        })
    }
}

fn encode(header: &FieldHeader, data: Vec<u8>) -> Vec<u8> {
    let text = header.render();
    let mut out = Vec::with_capacity(12 + text.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&data);
    out
}

/// Parses the header and returns it with the data section.
pub fn decode_header(bytes: &[u8]) -> Result<(FieldHeader, &[u8])> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing YMRF magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes
        .get(12..12 + len)
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    let text = std::str::from_utf8(body).map_err(|_| Error::Format("header is not UTF-8".into()))?;
    Ok((FieldHeader::parse(text)?, &bytes[12 + len..]))
}

fn doubles(data: &[u8], expected: usize) -> Result<Vec<f64>> {
    if data.len() != expected * 8 {
        return Err(Error::Format(format!(
            "data section holds {} bytes, expected {}",
            data.len(),
            expected * 8
        )));
    }
    let out: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("field file data"));
    }
    Ok(out)
}

fn expect<G: Group>(h: &FieldHeader, kind: FieldKind) -> Result<Arc<LatticeComplex>> {
    if h.kind != kind {
        return Err(Error::Format(format!("expected a {} file, found {}", kind.as_str(), h.kind.as_str())));
    }
    if h.group != G::KIND {
        return Err(Error::GroupMismatch {
            expected: G::KIND.to_string(),
            found: h.group.to_string(),
        });
    }
    h.complex()
}

fn group_values<G: Group>(data: &[u8], n: usize) -> Result<Vec<G>> {
    let raw = doubles(data, n * G::COORDS)?;
    raw.chunks_exact(G::COORDS)
        .map(|c| {
            let g = G::from_coords(c);
            if g.norm_deviation() > 1e-9 {
                return Err(Error::Format("group element off the unit sphere".into()));
            }
            Ok(g)
        })
        .collect()
}

pub fn encode_links<G: Group>(u: &LinkField<G>) -> Result<Vec<u8>> {
    let h = FieldHeader::for_complex(FieldKind::Links, G::KIND, None, u.complex())?;
    let mut data = Vec::with_capacity(u.links().len() * G::COORDS * 8);
    for g in u.links() {
        g.write_le(&mut data);
    }
    Ok(encode(&h, data))
}

pub fn decode_links<G: Group>(bytes: &[u8]) -> Result<LinkField<G>> {
    let (h, data) = decode_header(bytes)?;
    let c = expect::<G>(&h, FieldKind::Links)?;
    let links = group_values::<G>(data, c.num_edges())?;
    LinkField::from_links(&c, links)
}

pub fn encode_cochain<A: Algebra>(group: GroupKind, c: &Cochain<A>) -> Result<Vec<u8>> {
    let h = FieldHeader::for_complex(FieldKind::Cochain, group, Some(c.degree()), c.complex())?;
    let mut data = Vec::with_capacity(c.values().len() * A::DIM * 8);
    for x in c.values() {
        x.write_le(&mut data);
    }
    Ok(encode(&h, data))
}

pub fn decode_cochain<G: Group>(bytes: &[u8]) -> Result<Cochain<G::Algebra>> {
    let (h, data) = decode_header(bytes)?;
    let c = expect::<G>(&h, FieldKind::Cochain)?;
    let k = h.degree.unwrap();
    if k > 4 {
        return Err(Error::Format(format!("degree {k} exceeds 4")));
    }
    let dim = <G::Algebra as Algebra>::DIM;
    let raw = doubles(data, c.num_cells(k) * dim)?;
    let values = raw.chunks_exact(dim).map(G::Algebra::from_coords).collect();
    Cochain::from_values(&c, k, values)
}

pub fn encode_gauge<G: Group>(g: &VertexGaugeField<G>) -> Result<Vec<u8>> {
    let h = FieldHeader::for_complex(FieldKind::Gauge, G::KIND, None, g.complex())?;
    let mut data = Vec::with_capacity(g.values().len() * G::COORDS * 8);
    for x in g.values() {
        x.write_le(&mut data);
    }
    Ok(encode(&h, data))
}

pub fn decode_gauge<G: Group>(bytes: &[u8]) -> Result<VertexGaugeField<G>> {
    let (h, data) = decode_header(bytes)?;
    let c = expect::<G>(&h, FieldKind::Gauge)?;
    let values = group_values::<G>(data, c.num_vertices())?;
    VertexGaugeField::from_values(&c, values)
}

/// Reads only the header of a field file.
pub fn read_header(path: &Path) -> Result<FieldHeader> {
    let bytes = fs::read(path)?;
    Ok(decode_header(&bytes)?.0)
}

pub fn save_links<G: Group>(path: &Path, u: &LinkField<G>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_links(u)?)?;
    Ok(())
}

pub fn load_links<G: Group>(path: &Path) -> Result<LinkField<G>> {
    decode_links(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{Su2, U1};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn link_round_trip_is_bit_exact() {
        let c = LatticeComplex::torus([3, 4, 3, 5], 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = LinkField::<Su2>::random(&c, &mut rng, 2.0);
        let bytes = encode_links(&u).unwrap();
        assert_eq!(&bytes[..4], b"YMRF");
        let back = decode_links::<Su2>(&bytes).unwrap();
        assert_eq!(back, u);
        assert!(matches!(decode_links::<U1>(&bytes), Err(Error::GroupMismatch { .. })));
    }

    #[test]
    fn cochain_and_gauge_round_trip() {
        let c = LatticeComplex::open_box([3; 4], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Cochain::<crate::group::U1Alg>::random(&c, 2, &mut rng, 1.0);
        let back = decode_cochain::<U1>(&encode_cochain(GroupKind::U1, &a).unwrap()).unwrap();
        assert_eq!(back.values(), a.values());
        assert_eq!(back.degree(), 2);
        let g = VertexGaugeField::<Su2>::random(&c, &mut rng, 1.0);
        assert_eq!(decode_gauge::<Su2>(&encode_gauge(&g).unwrap()).unwrap(), g);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let c = LatticeComplex::torus([3; 4], 1.0).unwrap();
        let bytes = encode_links(&LinkField::<U1>::identity(&c)).unwrap();
        assert!(decode_links::<U1>(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_links::<U1>(&bad).is_err());
        let text = String::from_utf8_lossy(&bytes[12..]).to_string();
        assert!(text.starts_with("kind=links\ngroup=u1\n"));
    }
}
