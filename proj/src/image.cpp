#include "realmsim/image.hpp"

#include <fstream>
#include <iterator>

#include "realmsim/error.hpp"
#include "realmsim/granule_space.hpp"

namespace realmsim::image {

namespace {

cbor::Value body_value(const RealmImage& image) {
  cbor::Array segments;
  for (const Segment& s : image.segments) {
    segments.push_back(cbor::Map{{1, s.target_addr}, {2, s.content}});
  }
  return cbor::Map{
      {1, std::move(segments)},
      {2, cbor::Map{{1, image.entry_point.granule}, {2, image.entry_point.offset}}},
      {3, image.personalization},
      {4, cbor::Map{{1, image.metadata.image_size_bytes}, {2, image.metadata.description}}},
  };
}

}  // namespace

Digest RealmImage::compute_rim() const {
  Digest rim = attestation::initial_rim(params());
  for (const Segment& s : segments) {
    rim = attestation::extend(rim, attestation::MeasurementRecord::of(s.content, s.target_addr));
  }
  return rim;
}

Bytes RealmImage::signed_payload() const {
  return cbor::encode(cbor::Map{{1, body_value(*this)}, {2, refs.to_cbor()}});
}

Bytes RealmImage::encode() const {
  return cbor::encode(
      cbor::Map{{1, body_value(*this)}, {2, refs.to_cbor()}, {3, signature}});
}

RealmImage RealmImage::decode(ByteView bytes) {
  cbor::Value root = cbor::decode(bytes);
  cbor::MapReader top(root, {1, 2, 3});
  cbor::MapReader body(top.at(1), {1, 2, 3, 4});
  RealmImage image;
  for (const cbor::Value& v : body.at(1).as_array()) {
    cbor::MapReader seg(v, {1, 2});
    image.segments.push_back({seg.at(1).as_uint(), seg.at(2).as_bytes()});
    if (image.segments.back().content.size() != kGranuleSize) {
      throw Error(ErrorCode::kDecode, "segment is not one granule");
    }
  }
  cbor::MapReader entry(body.at(2), {1, 2});
  image.entry_point = {entry.at(1).as_uint(), entry.at(2).as_uint()};
  image.personalization = body.fixed<64>(3);
  cbor::MapReader meta(body.at(4), {1, 2});
  image.metadata = {meta.at(1).as_uint(), meta.at(2).as_text()};
  image.refs = attestation::ReferenceValues::from_cbor(top.at(2));
  image.signature = top.fixed<64>(3);
  return image;
}

RealmImage sign(RealmImage image, const crypto::SigningKey& verifier) {
  image.refs.expected_rim = image.compute_rim();
  image.signature = verifier.sign(image.signed_payload());
  return image;
}

RealmImage verify_bundle(ByteView bytes, const PublicKey& verifier_key) {
  RealmImage image;
  try {
    image = RealmImage::decode(bytes);
  } catch (const Error& e) {
    throw Error(ErrorCode::kImageVerification, std::string("DecodeError: ") + e.what());
  }
  if (image.segments.empty()) {
    throw Error(ErrorCode::kImageVerification, "image has no segments");
  }
  if (image.compute_rim() != image.refs.expected_rim) {
    throw Error(ErrorCode::kImageVerification, "RimMismatch: segments do not reproduce expected rim");
  }
  if (!crypto::verify_signature(verifier_key, image.signed_payload(), image.signature)) {
    throw Error(ErrorCode::kImageVerification, "SignatureMismatch: verifier signature invalid");
  }
  return image;
}

RealmImage fetch_realm_image(const std::filesystem::path& path, const PublicKey& verifier_key) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open image " + path.string());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return verify_bundle(bytes, verifier_key);
}

}  // namespace realmsim::image
