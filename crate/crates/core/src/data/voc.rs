//! PASCAL VOC annotation files.

use std::fmt::Write as _;

use quick_xml::events::Event;
use quick_xml::Reader;
use thiserror::Error;

use crate::classes::FastenerClass;
use crate::eval::GroundTruthObject;
use crate::geometry::BBox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VocError {
    #[error("malformed xml at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
    #[error("missing required element <{0}>")]
    Missing(String),
    #[error("element <{element}> has invalid value {value:?}")]
    BadValue { element: String, value: String },
    #[error("object {index}: {message}")]
    BadBox { index: usize, message: String },
    #[error("unknown class {0:?}")]
    Vocabulary(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub filename: String,
    pub width: usize,
    pub height: usize,
    pub objects: Vec<GroundTruthObject>,
}

impl Annotation {
    pub fn new(filename: impl Into<String>, width: usize, height: usize) -> Self {
        Self {
            filename: filename.into(),
            width,
            height,
            objects: Vec::new(),
        }
    }

    pub fn boxes(&self) -> Vec<BBox> {
        self.objects.iter().map(|o| o.bbox).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VocMode {
    /// Unknown class names are an error.
    #[default]
    Strict,
    /// Unknown class names are skipped with a warning.
    Lenient,
}

#[derive(Debug, Default)]
struct Node {
    name: String,
    text: String,
    children: Vec<Node>,
}

impl Node {
    fn child(&self, name: &str) -> Option<&Node> {
        self.children.iter().find(|c| c.name == name)
    }

    fn require(&self, name: &str) -> Result<&Node, VocError> {
        self.child(name).ok_or_else(|| VocError::Missing(format!("{}/{}", self.name, name)))
    }

    fn text_of(&self, name: &str) -> Result<&str, VocError> {
        Ok(self.require(name)?.text.trim())
    }

    fn real(&self, name: &str) -> Result<f64, VocError> {
        let t = self.text_of(name)?;
        t.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| VocError::BadValue {
                element: name.to_string(),
                value: t.to_string(),
            })
    }

    fn size(&self, name: &str) -> Result<usize, VocError> {
        let t = self.text_of(name)?;
        let bad = || VocError::BadValue {
            element: name.to_string(),
            value: t.to_string(),
        };
        match t.parse::<usize>() {
            Ok(v) => Ok(v),
            Err(_) => {
                let v: f64 = t.parse().map_err(|_| bad())?;
                if v >= 0.0 && v.fract() == 0.0 && v < 1e9 {
                    Ok(v as usize)
                } else {
                    Err(bad())
                }
            }
        }
    }
}

fn xml_error(reader: &Reader<&[u8]>, e: impl std::fmt::Display) -> VocError {
    VocError::Xml {
        offset: reader.error_position(),
        message: e.to_string(),
    }
}

fn parse_tree(xml: &[u8]) -> Result<Node, VocError> {
    let mut reader = Reader::from_reader(xml);
    reader.config_mut().trim_text(true);
    let mut stack: Vec<Node> = vec![Node::default()];
    loop {
        let ev = reader.read_event().map_err(|e| xml_error(&reader, e))?;
        match ev {
            Event::Start(e) => stack.push(Node {
                name: String::from_utf8_lossy(e.name().as_ref()).into_owned(),
                ..Node::default()
            }),
            Event::Empty(e) => {
                let node = Node {
                    name: String::from_utf8_lossy(e.name().as_ref()).into_owned(),
                    ..Node::default()
                };
                stack.last_mut().expect("root").children.push(node);
            }
            Event::End(_) => {
                let node = stack.pop().expect("balanced");
                stack.last_mut().ok_or_else(|| xml_error(&reader, "unbalanced end tag"))?.children.push(node);
            }
            Event::Text(t) => {
                let s = t.unescape().map_err(|e| xml_error(&reader, e))?;
                stack.last_mut().expect("root").text.push_str(&s);
            }
            Event::CData(t) => {
                stack.last_mut().expect("root").text.push_str(&String::from_utf8_lossy(&t));
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if stack.len() != 1 {
        return Err(VocError::Xml {
            offset: reader.buffer_position(),
            message: format!("unclosed element <{}>", stack.last().map_or("", |n| &n.name)),
        });
    }
    let mut doc = stack.pop().expect("root");
    doc.name.clear();
    Ok(doc)
}

pub fn parse_voc(xml: &[u8], mode: VocMode) -> Result<Annotation, VocError> {
    let doc = parse_tree(xml)?;
    let root = doc.child("annotation").ok_or_else(|| VocError::Missing("annotation".into()))?;
    let size = root.require("size")?;
    let width = size.size("width")?;
    let height = size.size("height")?;
    let filename = root.child("filename").map(|n| n.text.trim().to_string()).unwrap_or_default();

    let mut objects = Vec::new();
    for (index, obj) in root.children.iter().filter(|c| c.name == "object").enumerate() {
        let name = obj.text_of("name")?;
        let bnd = obj.require("bndbox")?;
        let (x0, y0, x1, y1) = (bnd.real("xmin")?, bnd.real("ymin")?, bnd.real("xmax")?, bnd.real("ymax")?);
        if x0 > x1 || y0 > y1 {
            return Err(VocError::BadBox {
                index,
                message: format!("min corner ({x0}, {y0}) exceeds max corner ({x1}, {y1})"),
            });
        }
        if x0 < 0.0 || y0 < 0.0 || x1 > width as f64 || y1 > height as f64 {
            return Err(VocError::BadBox {
                index,
                message: format!("box ({x0}, {y0}, {x1}, {y1}) outside {width}x{height} image"),
            });
        }
        let class = match name.parse::<FastenerClass>() {
            Ok(c) => c,
            Err(_) if mode == VocMode::Lenient => {
                log::warn!("skipping object {index} with unknown class {name:?}");
                continue;
            }
            Err(_) => return Err(VocError::Vocabulary(name.to_string())),
        };
        let bbox = BBox::new(x0, y0, x1, y1).expect("checked corners");
        objects.push(GroundTruthObject { class, bbox });
    }
    Ok(Annotation {
        filename,
        width,
        height,
        objects,
    })
}

fn escape(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

pub fn write_voc(ann: &Annotation) -> Vec<u8> {
    let mut s = String::from("<annotation>\n");
    let _ = writeln!(s, "  <filename>{}</filename>", escape(&ann.filename));
    let _ = writeln!(
        s,
        "  <size>\n    <width>{}</width>\n    <height>{}</height>\n    <depth>3</depth>\n  </size>",
        ann.width, ann.height
    );
    for o in &ann.objects {
        let b = o.bbox;
        let _ = writeln!(
            s,
            "  <object>\n    <name>{}</name>\n    <bndbox>\n      <xmin>{}</xmin>\n      <ymin>{}</ymin>\n      <xmax>{}</xmax>\n      <ymax>{}</ymax>\n    </bndbox>\n  </object>",
            o.class.name(),
            b.x_min,
            b.y_min,
            b.x_max,
            b.y_max
        );
    }
    s.push_str("</annotation>\n");
    s.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"<annotation>
  <folder>fasteners</folder>
  <filename>a.ppm</filename>
  <size><width>800</width><height>1000</height><depth>3</depth></size>
  <object>
    <name>WJ-8</name><pose>Unspecified</pose><truncated>0</truncated>
    <bndbox><xmin>100</xmin><ymin>200</ymin><xmax>180</xmax><ymax>320</ymax></bndbox>
  </object>
</annotation>"#;

    #[test]
    fn parses_minimal_file() {
        let a = parse_voc(MINIMAL.as_bytes(), VocMode::Strict).unwrap();
        assert_eq!(a.filename, "a.ppm");
        assert_eq!((a.width, a.height), (800, 1000));
        assert_eq!(a.objects.len(), 1);
        assert_eq!(a.objects[0].class, FastenerClass::Wj8);
        assert_eq!(a.objects[0].bbox, BBox::new(100.0, 200.0, 180.0, 320.0).unwrap());
        assert_eq!(parse_voc(&write_voc(&a), VocMode::Strict).unwrap(), a);
    }

    #[test]
    fn zero_objects() {
        let a = Annotation::new("e.ppm", 10, 20);
        let xml = write_voc(&a);
        assert!(!String::from_utf8_lossy(&xml).contains("<object>"));
        assert_eq!(parse_voc(&xml, VocMode::Strict).unwrap(), a);
    }

    #[test]
    fn error_classes() {
        let swapped = MINIMAL.replace("<xmin>100</xmin>", "<xmin>190</xmin>");
        assert!(matches!(parse_voc(swapped.as_bytes(), VocMode::Strict), Err(VocError::BadBox { index: 0, .. })));
        let outside = MINIMAL.replace("<xmax>180</xmax>", "<xmax>801</xmax>");
        assert!(matches!(parse_voc(outside.as_bytes(), VocMode::Strict), Err(VocError::BadBox { .. })));
        let no_size = MINIMAL.replace("<height>1000</height>", "");
        assert_eq!(
            parse_voc(no_size.as_bytes(), VocMode::Strict),
            Err(VocError::Missing("size/height".into()))
        );
        let no_box = MINIMAL.replace("<ymax>320</ymax>", "");
        assert_eq!(
            parse_voc(no_box.as_bytes(), VocMode::Strict),
            Err(VocError::Missing("bndbox/ymax".into()))
        );
        let nan = MINIMAL.replace("<ymin>200</ymin>", "<ymin>abc</ymin>");
        assert!(matches!(parse_voc(nan.as_bytes(), VocMode::Strict), Err(VocError::BadValue { .. })));
        let broken = MINIMAL.replace("</bndbox>", "</bnd>");
        assert!(matches!(parse_voc(broken.as_bytes(), VocMode::Strict), Err(VocError::Xml { .. })));
        let truncated = &MINIMAL[..MINIMAL.len() - 14];
        assert!(matches!(parse_voc(truncated.as_bytes(), VocMode::Strict), Err(VocError::Xml { .. })));
        assert_eq!(
            parse_voc(b"<other/>", VocMode::Strict),
            Err(VocError::Missing("annotation".into()))
        );
    }

    #[test]
    fn xml_error_reports_offset() {
        let broken = MINIMAL.replace("</bndbox>", "</bnd>");
        match parse_voc(broken.as_bytes(), VocMode::Strict) {
            Err(VocError::Xml { offset, .. }) => {
                assert!(offset > 0 && offset as usize <= broken.len());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn vocabulary_modes() {
        let odd = MINIMAL.replace("WJ-8", "SKL-14");
        assert_eq!(
            parse_voc(odd.as_bytes(), VocMode::Strict),
            Err(VocError::Vocabulary("SKL-14".into()))
        );
        let a = parse_voc(odd.as_bytes(), VocMode::Lenient).unwrap();
        assert!(a.objects.is_empty());
    }

    #[test]
    fn escapes_filename() {
        let a = Annotation::new("a&b<c>.ppm", 4, 4);
        assert_eq!(parse_voc(&write_voc(&a), VocMode::Strict).unwrap(), a);
    }

    pub(crate) fn arb_annotation() -> impl Strategy<Value = Annotation> {
        (1usize..3000, 1usize..3000, "[a-z0-9_]{1,12}\\.ppm").prop_flat_map(|(w, h, name)| {
            let obj = (
                prop::sample::select(FastenerClass::ALL.to_vec()),
                0.0..1.0f64,
                0.0..1.0f64,
                0.0..1.0f64,
                0.0..1.0f64,
            )
                .prop_map(move |(class, a, b, c, d)| {
                    let (x0, x1) = (a.min(b) * w as f64, a.max(b) * w as f64);
                    let (y0, y1) = (c.min(d) * h as f64, c.max(d) * h as f64);
                    GroundTruthObject {
                        class,
                        bbox: BBox::new(x0, y0, x1, y1).unwrap(),
                    }
                });
            prop::collection::vec(obj, 0..8).prop_map(move |objects| Annotation {
                filename: name.clone(),
                width: w,
                height: h,
                objects,
            })
        })
    }

    proptest! {
        #[test]
        fn round_trip(a in arb_annotation()) {
            prop_assert_eq!(parse_voc(&write_voc(&a), VocMode::Strict).unwrap(), a);
        }
    }
}
