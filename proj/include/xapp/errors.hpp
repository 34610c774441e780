#pragma once

#include <stdexcept>
#include <string>

namespace xapp {

// Base class for every domain error surfaced to callers and the CLI.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define XAPP_DEFINE_ERROR(name)                                  \
    struct name : Error {                                        \
        explicit name(const std::string& what) : Error(what) {}  \
    }

XAPP_DEFINE_ERROR(InvalidConfig);
XAPP_DEFINE_ERROR(NoLinkAvailable);
XAPP_DEFINE_ERROR(DimensionMismatch);
XAPP_DEFINE_ERROR(EmptyDataset);
XAPP_DEFINE_ERROR(SingleClassDataset);
XAPP_DEFINE_ERROR(NonFiniteLoss);
XAPP_DEFINE_ERROR(MalformedDocument);
XAPP_DEFINE_ERROR(TooManyFeatures);
XAPP_DEFINE_ERROR(NoCorrectPredictions);
XAPP_DEFINE_ERROR(InvalidManifest);
XAPP_DEFINE_ERROR(UnknownPipeline);
XAPP_DEFINE_ERROR(UnknownVertex);
XAPP_DEFINE_ERROR(InsufficientResources);
XAPP_DEFINE_ERROR(UnknownDeployment);
XAPP_DEFINE_ERROR(NotRunning);
XAPP_DEFINE_ERROR(NotApproved);
XAPP_DEFINE_ERROR(UnpublishedXApp);
XAPP_DEFINE_ERROR(UnknownArtifact);
XAPP_DEFINE_ERROR(MalformedURI);

#undef XAPP_DEFINE_ERROR

}  // namespace xapp
